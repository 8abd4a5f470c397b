// Copyright 2026 the ropegrad authors
// SPDX-License-Identifier: Apache-2.0

#include "ropegrad/instance_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "ropegrad/errors.hpp"

namespace ropegrad {

namespace {

using nlohmann::json;

Mat parse_matrix(const json& j, Index rows, Index cols, const char* name) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows)
    throw ConfigError(std::string("instance file: ") + name + " must have " +
                      std::to_string(rows) + " rows");
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<size_t>(r)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols)
      throw ConfigError(std::string("instance file: ") + name + " row " +
                        std::to_string(r) + " must have " +
                        std::to_string(cols) + " entries");
    for (Index c = 0; c < cols; ++c)
      m(r, c) = row[static_cast<size_t>(c)].get<double>();
  }
  return m;
}

json matrix_to_json(const Mat& m) {
  json rows = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Instance load_instance(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("instance file: JSON parse error: ") +
                      e.what());
  }
  Instance inst;
  try {
    inst.n = j.at("n").get<Index>();
    inst.d = j.at("d").get<Index>();
    inst.B = j.at("B").get<double>();
    const std::string mode = j.at("mode").get<std::string>();
    if (inst.n < 1 || inst.d < 1)
      throw ConfigError("instance file: need n >= 1 and d >= 1");
    if (mode == "identity") {
      inst.weights = RopeWeights::identity(inst.n, inst.d);
    } else if (mode == "rotary") {
      inst.weights =
          RopeWeights::rotary(inst.n, inst.d, j.at("base").get<double>());
    } else if (mode == "general") {
      std::vector<std::pair<Index, std::vector<WeightEntry>>> table;
      for (const auto& wt : j.at("weights")) {
        std::vector<WeightEntry> entries;
        for (const auto& e : wt.at("entries")) {
          if (!e.is_array() || e.size() != 3)
            throw ConfigError(
                "instance file: weight entries must be [row, col, value]");
          entries.push_back({e[0].get<Index>(), e[1].get<Index>(),
                             e[2].get<double>()});
        }
        table.emplace_back(wt.at("t").get<Index>(), std::move(entries));
      }
      inst.weights = RopeWeights::general(inst.n, inst.d, std::move(table));
    } else {
      throw ConfigError("instance file: unknown mode '" + mode + "'");
    }
    inst.A1 = parse_matrix(j.at("A1"), inst.n, inst.d, "A1");
    inst.A2 = parse_matrix(j.at("A2"), inst.n, inst.d, "A2");
    inst.A3 = parse_matrix(j.at("A3"), inst.n, inst.d, "A3");
    inst.X1 = parse_matrix(j.at("X1"), inst.d, inst.d, "X1");
    inst.X2 = parse_matrix(j.at("X2"), inst.d, inst.d, "X2");
    inst.Y = parse_matrix(j.at("Y"), inst.d, inst.d, "Y");
    inst.E = parse_matrix(j.at("E"), inst.n, inst.d, "E");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("instance file: ") + e.what());
  }
  inst.validate();
  return inst;
}

Instance load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instance file: " + path);
  return load_instance(in);
}

void save_instance(const Instance& inst, std::ostream& out) {
  json j;
  j["n"] = inst.n;
  j["d"] = inst.d;
  j["B"] = inst.B;
  switch (inst.weights.mode()) {
    case WeightMode::kIdentity:
      j["mode"] = "identity";
      break;
    case WeightMode::kRotary:
      j["mode"] = "rotary";
      j["base"] = inst.weights.base();
      break;
    case WeightMode::kGeneral: {
      j["mode"] = "general";
      json table = json::array();
      for (const auto& [t, entries] : inst.weights.table()) {
        json wt;
        wt["t"] = t;
        json es = json::array();
        for (const auto& e : entries)
          es.push_back(json::array({e.row, e.col, e.value}));
        wt["entries"] = std::move(es);
        table.push_back(std::move(wt));
      }
      j["weights"] = std::move(table);
      break;
    }
  }
  j["A1"] = matrix_to_json(inst.A1);
  j["A2"] = matrix_to_json(inst.A2);
  j["A3"] = matrix_to_json(inst.A3);
  j["X1"] = matrix_to_json(inst.X1);
  j["X2"] = matrix_to_json(inst.X2);
  j["Y"] = matrix_to_json(inst.Y);
  j["E"] = matrix_to_json(inst.E);
  out << j.dump(2) << "\n";
}

void save_instance_file(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file: " + path);
  save_instance(inst, out);
}

}  // namespace ropegrad
