#pragma once

#include <json.hpp>

#include "clipse/search.hpp"

// JSON encodings shared by the HTTP server and the HTTP shard client.
namespace clipse::wire {

inline nlohmann::json results_to_json(std::span<const RankedResult> results) {
  auto arr = nlohmann::json::array();
  for (const auto& r : results) {
    arr.push_back({{"path", r.path}, {"score", r.score}, {"rank", r.rank}});
  }
  return arr;
}

inline std::vector<RankedResult> results_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw FormatError("results must be an array");
  std::vector<RankedResult> out;
  out.reserve(arr.size());
  for (const auto& item : arr) {
    if (!item.is_object() || !item.contains("path") || !item["path"].is_string() ||
        !item.contains("score") || !item["score"].is_number() || !item.contains("rank") ||
        !item["rank"].is_number_unsigned()) {
      throw FormatError("malformed result entry: " + item.dump());
    }
    out.push_back({item["path"].get<std::string>(), item["score"].get<double>(),
                   item["rank"].get<std::size_t>()});
  }
  return out;
}

}  // namespace clipse::wire
