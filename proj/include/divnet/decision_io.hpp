#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "divnet/errors.hpp"
#include "divnet/prune.hpp"

namespace divnet {

/// PruneDecision as JSON, so masks can be replayed and shared across
/// strategies. Doubles round-trip exactly (shortest-representation dump).
inline void save_decision(const PruneDecision& decision, const std::string& path) {
  decision.validate();
  nlohmann::json j;
  j["format"] = "divnet-decision";
  j["version"] = 1;
  j["layer_index"] = decision.layer_index;
  j["width"] = decision.width;
  j["kept"] = decision.kept;
  j["removed"] = decision.removed;
  if (decision.alphas) {
    j["alphas"] = {{"rows", decision.alphas->rows()},
                   {"cols", decision.alphas->cols()},
                   {"data", decision.alphas->data()}};
  } else {
    j["alphas"] = nullptr;
  }
  std::ofstream os(path);
  if (!os) throw format_error(path + ": cannot open for writing");
  os << j.dump(2) << "\n";
  if (!os) throw format_error(path + ": write failed");
}

inline PruneDecision load_decision(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw format_error(path + ": cannot open file");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path + ": invalid JSON: " + e.what());
  }
  try {
    if (j.at("format") != "divnet-decision" || j.at("version") != 1)
      throw format_error(path + ": not a version-1 divnet decision file");
    PruneDecision d;
    d.layer_index = j.at("layer_index").get<int>();
    d.width = j.at("width").get<std::size_t>();
    d.kept = j.at("kept").get<std::vector<int>>();
    d.removed = j.at("removed").get<std::vector<int>>();
    if (!j.at("alphas").is_null()) {
      const auto& a = j.at("alphas");
      Matrix m(a.at("rows").get<std::size_t>(), a.at("cols").get<std::size_t>());
      const auto data = a.at("data").get<std::vector<double>>();
      if (data.size() != m.size()) throw format_error(path + ": alphas size mismatch");
      m.data() = data;
      d.alphas = std::move(m);
    }
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw format_error(path + ": malformed decision file: " + e.what());
  }
}

}  // namespace divnet
