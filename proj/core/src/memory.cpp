// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include "adapm/memory.hpp"

#include <stdexcept>

namespace adapm {

std::uint64_t ShapeTable::parameter_count() const noexcept {
  std::uint64_t n = 0;
  for (const auto& e : entries) {
    if (!e.tied_to) n += e.shape.numel();
  }
  return n;
}

std::string_view to_string(OptimizerVariant v) noexcept {
  switch (v) {
    case OptimizerVariant::AdamW: return "adamw";
    case OptimizerVariant::AdamMini: return "adam-mini";
    case OptimizerVariant::AdaPM: return "adapm";
    case OptimizerVariant::AdaPMMini: return "adapm-mini";
  }
  return "unknown";
}

const VariantMemory& MemoryReport::variant(OptimizerVariant v) const {
  return variants.at(static_cast<std::size_t>(v));
}

std::uint64_t MemoryReport::bytes(OptimizerVariant v) const {
  return variant(v).totals.total_reals() * bytes_per_real;
}

std::uint64_t MemoryReport::first_order_bytes(OptimizerVariant v) const {
  return variant(v).totals.first_order_reals * bytes_per_real;
}

double MemoryReport::gigabytes(OptimizerVariant v) const {
  return static_cast<double>(bytes(v)) / 1e9;
}

namespace {

std::uint64_t policy_first_order(const ShapeEntry& e, const Assignment& a) {
  const std::uint64_t m = e.shape.rows;
  const std::uint64_t n = e.shape.matrix_cols();
  switch (a.mode.kind()) {
    case MomentumKind::None: return 0;
    case MomentumKind::Full: return m * n;
    case MomentumKind::LowRank: return (m + n) * a.mode.rank_for(m, n);
  }
  return m * n;
}

}  // namespace

MemoryReport memory_report(const ShapeTable& table, const PartitionPolicy& policy,
                           std::size_t bytes_per_real) {
  if (table.entries.empty()) throw std::invalid_argument("memory_report: empty shape table");

  MemoryReport report;
  report.model = table.model;
  report.bytes_per_real = bytes_per_real;
  report.parameter_count = table.parameter_count();
  for (OptimizerVariant v : kAllVariants) {
    report.variants[static_cast<std::size_t>(v)].variant = v;
  }

  for (const ShapeEntry& e : table.entries) {
    if (e.tied_to) continue;
    const BlockRole role = e.resolved_role();
    const std::uint64_t numel = e.shape.numel();
    const std::uint64_t adapm_m = policy_first_order(e, policy.resolve(e.name, role, e.shape));

    const std::array<StateCount, 4> counts = {
        StateCount{numel, numel},    // AdamW
        StateCount{numel, 1},        // Adam-mini
        StateCount{adapm_m, numel},  // AdaPM
        StateCount{adapm_m, 1},      // AdaPM-mini
    };
    for (std::size_t k = 0; k < counts.size(); ++k) {
      VariantMemory& vm = report.variants[k];
      vm.totals.first_order_reals += counts[k].first_order_reals;
      vm.totals.second_order_reals += counts[k].second_order_reals;
      StateCount& r = vm.by_role[role];
      r.first_order_reals += counts[k].first_order_reals;
      r.second_order_reals += counts[k].second_order_reals;
    }
  }
  return report;
}

}  // namespace adapm
