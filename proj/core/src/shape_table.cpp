// Copyright (c) 2026 The AdaPM Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "adapm/memory.hpp"

namespace adapm {
namespace {

using nlohmann::json;

std::string substitute_layer(std::string name, std::size_t layer) {
  static constexpr std::string_view kToken = "{layer}";
  const std::string value = std::to_string(layer);
  for (auto pos = name.find(kToken); pos != std::string::npos; pos = name.find(kToken, pos)) {
    name.replace(pos, kToken.size(), value);
    pos += value.size();
  }
  return name;
}

ShapeEntry parse_entry(const json& j) {
  ShapeEntry e;
  e.name = j.at("name").get<std::string>();
  const auto dims = j.at("shape").get<std::vector<std::int64_t>>();
  if (dims.empty() || dims.size() > 2 || dims[0] <= 0 || (dims.size() == 2 && dims[1] <= 0)) {
    throw std::invalid_argument("shape table entry '" + e.name +
                                "': shape must be [rows] or [rows, cols] with positive sizes");
  }
  e.shape.rows = static_cast<std::size_t>(dims[0]);
  if (dims.size() == 2) e.shape.cols = static_cast<std::size_t>(dims[1]);
  if (j.contains("role")) e.role = block_role_from_string(j.at("role").get<std::string>());
  if (j.contains("tied_to")) e.tied_to = j.at("tied_to").get<std::string>();
  return e;
}

}  // namespace

ShapeTable parse_shape_table(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("shape table: ") + e.what());
  }
  ShapeTable table;
  try {
    table.model = doc.value("model", std::string("unnamed"));
    if (doc.contains("params")) {
      for (const auto& j : doc.at("params")) table.entries.push_back(parse_entry(j));
    }
    if (doc.contains("per_layer")) {
      const auto layers = doc.at("num_layers").get<std::size_t>();
      for (std::size_t l = 0; l < layers; ++l) {
        for (const auto& j : doc.at("per_layer")) {
          ShapeEntry e = parse_entry(j);
          e.name = substitute_layer(std::move(e.name), l);
          if (e.tied_to) e.tied_to = substitute_layer(*e.tied_to, l);
          table.entries.push_back(std::move(e));
        }
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("shape table: ") + e.what());
  }
  if (table.entries.empty()) throw std::invalid_argument("shape table has no parameters");
  return table;
}

ShapeTable load_shape_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open shape table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_shape_table(buf.str());
}

}  // namespace adapm
