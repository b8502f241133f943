#pragma once

#include <openssl/evp.h>

#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cofee/errors.hpp"

namespace cofee {

/// All serialized artifacts use insertion-ordered JSON so identical inputs
/// produce byte-identical files.
using Json = nlohmann::ordered_json;

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::ConfigError, "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0x0f]);
  }
  return out;
}

/// Canonical slug: lowercase, runs of non-alphanumerics collapse to a single
/// underscore, leading/trailing underscores trimmed.
inline std::string slug_from_name(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  bool pending_sep = false;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      pending_sep = true;
    }
  }
  if (out.empty()) out = "feature";
  return out;
}

/// Hands out slugs, suffixing a collision counter (_2, _3, ...) when the same
/// slug is requested twice within one scope.
class SlugAllocator {
 public:
  std::string allocate(std::string_view name) {
    std::string base = slug_from_name(name);
    auto [it, inserted] = seen_.try_emplace(base, 1);
    if (inserted) return base;
    std::string candidate;
    do {
      candidate = base + "_" + std::to_string(++it->second);
    } while (seen_.count(candidate) != 0);
    seen_.emplace(candidate, 1);
    return candidate;
  }

  void reserve(std::string_view slug) { seen_.try_emplace(std::string(slug), 1); }

 private:
  std::unordered_map<std::string, int> seen_;
};

/// Whitespace-token approximation used when a provider reports no usage.
inline std::size_t approx_token_count(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : text) {
    bool ws = std::isspace(static_cast<unsigned char>(c));
    if (!ws && !in_token) ++count;
    in_token = !ws;
  }
  return count;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::ConfigError, "cannot open file: " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::ConfigError, "cannot write file: " + path.string());
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw Error(ErrorCode::ConfigError, "short write: " + path.string());
  }
}

inline void write_json_file(const std::filesystem::path& path, const Json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

inline Json parse_json(std::string_view text, const std::string& what) {
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) {
    throw Error(ErrorCode::ParseFailure, "invalid JSON in " + what);
  }
  return value;
}

inline Json read_json_file(const std::filesystem::path& path) {
  return parse_json(read_text_file(path), path.string());
}

inline std::string zero_padded(std::size_t value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return digits;
}

/// Shortest round-trip decimal form, locale independent.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "0";
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, const std::string& what) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ParseFailure, "bad number '" + std::string(text) + "' in " + what);
  }
  return value;
}

/// Applies fn to indices [0, n) on up to `parallelism` threads. Results are
/// collected by index, so output order never depends on scheduling.
template <typename Result>
std::vector<Result> parallel_map(std::size_t n, int parallelism,
                                 const std::function<Result(std::size_t)>& fn) {
  std::vector<Result> results(n);
  if (n == 0) return results;
  if (parallelism <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
    return results;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), n);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) results[i] = fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace cofee
