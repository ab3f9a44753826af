#pragma once

// JSON documents (model, attack schedule, certificate) and CSV exports.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncsres/certificate.hpp"
#include "ncsres/errors.hpp"
#include "ncsres/hybrid.hpp"
#include "ncsres/lti_model.hpp"

namespace ncsres {

using json = nlohmann::json;

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline json matrix_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a non-empty array of rows");
  const auto rows = j.size();
  if (!j[0].is_array() || j[0].empty()) throw ParseError(where + ": row 0 is not a non-empty array");
  const auto cols = j[0].size();
  MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols)
      throw ParseError(where + ": row " + std::to_string(r) + " has the wrong length");
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& v = j[r][c];
      if (!v.is_number())
        throw ParseError(where + ": entry (" + std::to_string(r) + "," + std::to_string(c) +
                         ") is not a number");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v.get<double>();
    }
  }
  return m;
}

inline const json& require(const json& doc, const std::string& section, const std::string& key,
                           const std::string& alias) {
  if (!doc.contains(section) || !doc[section].is_object())
    throw ParseError("missing section '" + section + "' (needed for " + alias + ")");
  const auto& s = doc[section];
  if (!s.contains(key)) throw ParseError("missing " + section + "." + key + " (" + alias + ")");
  return s[key];
}

inline json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line number.
    std::size_t line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(origin + ":" + std::to_string(line) + ": " + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << text;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model documents

struct Model {
  PlantModel plant;
  ControllerModel controller;
  PerformanceOutput performance;
  NetworkParams network;
  std::string provenance;

  ClosedLoopMatrices closed_loop() const { return assemble_closed_loop(plant, controller, performance); }
};

inline Model model_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("model document must be a JSON object");
  Model m;
  using detail::matrix_from_json;
  using detail::require;
  m.plant.A = matrix_from_json(require(doc, "plant", "A", "A_p"), "plant.A");
  m.plant.B = matrix_from_json(require(doc, "plant", "B", "B_p"), "plant.B");
  m.plant.C = matrix_from_json(require(doc, "plant", "C", "C_p"), "plant.C");
  m.plant.W = matrix_from_json(require(doc, "plant", "W", "W"), "plant.W");
  m.controller.A = matrix_from_json(require(doc, "controller", "A", "A_c"), "controller.A");
  m.controller.B = matrix_from_json(require(doc, "controller", "B", "B_c"), "controller.B");
  m.controller.C = matrix_from_json(require(doc, "controller", "C", "C_c"), "controller.C");
  m.controller.D = matrix_from_json(require(doc, "controller", "D", "D_c"), "controller.D");
  m.performance.Co = matrix_from_json(require(doc, "performance", "Co", "C_o"), "performance.Co");
  const auto& ts = require(doc, "network", "Ts", "T_s");
  if (!ts.is_number()) throw ParseError("network.Ts is not a number");
  m.network.Ts = ts.get<double>();
  const auto& net = doc["network"];
  if (net.contains("Delta")) {
    if (!net["Delta"].is_number_integer()) throw ParseError("network.Delta is not an integer");
    m.network.Delta = net["Delta"].get<int>();
  }
  if (net.contains("Tmad")) {
    if (!net["Tmad"].is_number()) throw ParseError("network.Tmad is not a number");
    m.network.Tmad = net["Tmad"].get<double>();
  }
  if (doc.contains("provenance") && doc["provenance"].is_string())
    m.provenance = doc["provenance"].get<std::string>();

  m.plant.validate();
  m.controller.validate(m.plant);
  m.performance.validate(m.plant.n_x() + m.controller.n_x());
  m.network.validate();
  return m;
}

inline json model_to_json(const Model& m) {
  using detail::matrix_to_json;
  json doc;
  if (!m.provenance.empty()) doc["provenance"] = m.provenance;
  doc["plant"] = {{"A", matrix_to_json(m.plant.A)},
                  {"B", matrix_to_json(m.plant.B)},
                  {"C", matrix_to_json(m.plant.C)},
                  {"W", matrix_to_json(m.plant.W)}};
  doc["controller"] = {{"A", matrix_to_json(m.controller.A)},
                       {"B", matrix_to_json(m.controller.B)},
                       {"C", matrix_to_json(m.controller.C)},
                       {"D", matrix_to_json(m.controller.D)}};
  doc["performance"] = {{"Co", matrix_to_json(m.performance.Co)}};
  doc["network"] = {{"Ts", m.network.Ts}, {"Delta", m.network.Delta}, {"Tmad", m.network.Tmad}};
  return doc;
}

inline Model parse_model(const std::string& text, const std::string& origin = "<model>") {
  return model_from_json(detail::parse_text(text, origin));
}

inline Model load_model(const std::string& path) { return parse_model(detail::read_file(path), path); }

inline void save_model(const Model& m, const std::string& path) {
  detail::write_file(path, model_to_json(m).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Attack schedules: [{"k": 0, "action": "deliver", "delay": 0.001}, {"k": 1, "action": "drop"}, ...]

inline json schedule_to_json(const AttackSchedule& s) {
  json arr = json::array();
  for (std::size_t k = 0; k < s.entries.size(); ++k) {
    const auto& e = s.entries[k];
    json item = {{"k", k}, {"action", e.delivered ? "deliver" : "drop"}};
    if (e.delivered) item["delay"] = e.delay;
    arr.push_back(std::move(item));
  }
  return arr;
}

inline AttackSchedule schedule_from_json(const json& arr) {
  if (!arr.is_array()) throw ParseError("schedule must be a JSON array");
  AttackSchedule s;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& item = arr[i];
    const std::string where = "schedule entry " + std::to_string(i);
    if (!item.is_object() || !item.contains("k") || !item.contains("action"))
      throw ParseError(where + ": expected {k, action[, delay]}");
    if (!item["k"].is_number_integer() || item["k"].get<long long>() != static_cast<long long>(i))
      throw ParseError(where + ": k must equal the entry position");
    const auto action = item["action"].get<std::string>();
    if (action == "drop") {
      s.entries.push_back(ScheduleEntry::drop());
    } else if (action == "deliver") {
      const double d = item.contains("delay") ? item["delay"].get<double>() : 0.0;
      s.entries.push_back(ScheduleEntry::deliver(d));
    } else {
      throw ParseError(where + ": unknown action '" + action + "'");
    }
  }
  return s;
}

inline AttackSchedule load_schedule(const std::string& path) {
  return schedule_from_json(detail::parse_text(detail::read_file(path), path));
}

inline void save_schedule(const AttackSchedule& s, const std::string& path) {
  detail::write_file(path, schedule_to_json(s).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Certificates

inline json certificate_to_json(const Certificate& c) {
  using detail::matrix_to_json;
  const auto& p = c.params;
  return {{"mode", to_string(c.mode)},
          {"delta", p.delta},
          {"gamma", p.gamma},
          {"network", {{"Ts", c.net.Ts}, {"Delta", c.net.Delta}, {"Tmad", c.net.Tmad}}},
          {"P1", matrix_to_json(p.P1)},
          {"P2_0", matrix_to_json(p.P2_0)},
          {"P2_1", matrix_to_json(p.P2_1)},
          {"P3_0", matrix_to_json(p.P3_0)},
          {"P3_1", matrix_to_json(p.P3_1)}};
}

inline Certificate certificate_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("certificate must be a JSON object");
  for (const char* key : {"mode", "delta", "gamma", "network", "P1", "P2_0", "P2_1", "P3_0", "P3_1"})
    if (!j.contains(key)) throw ParseError(std::string("certificate is missing '") + key + "'");
  Certificate c;
  c.mode = parse_mode(j["mode"].get<std::string>());
  c.params.delta = j["delta"].get<double>();
  c.params.gamma = j["gamma"].get<double>();
  const auto& n = j["network"];
  c.net.Ts = n.at("Ts").get<double>();
  c.net.Delta = n.at("Delta").get<int>();
  c.net.Tmad = n.at("Tmad").get<double>();
  c.net.validate();
  c.params.P1 = detail::matrix_from_json(j["P1"], "P1");
  c.params.P2_0 = detail::matrix_from_json(j["P2_0"], "P2_0");
  c.params.P2_1 = detail::matrix_from_json(j["P2_1"], "P2_1");
  c.params.P3_0 = detail::matrix_from_json(j["P3_0"], "P3_0");
  c.params.P3_1 = detail::matrix_from_json(j["P3_1"], "P3_1");
  return c;
}

inline Certificate load_certificate(const std::string& path) {
  return certificate_from_json(detail::parse_text(detail::read_file(path), path));
}

inline void save_certificate(const Certificate& c, const std::string& path) {
  detail::write_file(path, certificate_to_json(c).dump(2) + "\n");
}

}  // namespace ncsres
