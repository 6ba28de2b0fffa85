#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nestfit/error.hpp"
#include "nestfit/kernel.hpp"

namespace nestfit {

inline constexpr const char* kVersion = "0.3.0";

inline std::uint64_t fnv1a64(const std::string& bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) input_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string options;  // canonical text of the options that affect numbers
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  unsigned threads = 1;
  std::string started_at = utc_timestamp();
  std::string finished_at;
  int exit_code = 0;
  std::string error;

  // Hash over input file contents and the canonical option text.
  std::string config_hash() const {
    std::uint64_t h = fnv1a64(command);
    for (const auto& p : inputs) {
      try {
        h = fnv1a64(read_file_bytes(p), h);
      } catch (const Error&) {
        h = fnv1a64("<missing:" + p + ">", h);
      }
    }
    return hex64(fnv1a64(options, h));
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["options"] = options;
    j["config_hash"] = config_hash();
    j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json();
    j["prng"] = kRngName;
    j["deterministic"] = deterministic;
    j["threads"] = threads;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["exit_code"] = exit_code;
    if (!error.empty()) j["error"] = error;
    return j;
  }

  void write(const std::string& path) {
    finished_at = utc_timestamp();
    std::ofstream out(path, std::ios::binary);
    if (!out) input_error("cannot write manifest '" + path + "'");
    out << to_json().dump(2) << '\n';
  }
};

}  // namespace nestfit
