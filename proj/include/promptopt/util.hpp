#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace popt {

// FNV-1a, 64-bit. Used for unit fingerprints and file checksums.
std::uint64_t fnv1a64(std::string_view data);
std::string to_hex64(std::uint64_t v);
std::string fnv1a64_hex(std::string_view data);

std::string_view trim_view(std::string_view s);
inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

/// Collapses every run of whitespace to a single space and trims the ends.
std::string collapse_ws(std::string_view s);

/// True when needle occurs in haystack after whitespace collapsing of both.
bool contains_normalized(std::string_view haystack, std::string_view needle);

std::vector<std::string> split_lines(std::string_view s);

long long round_half_up(double x);

/// Shortest round-trip decimal form, stable across runs.
std::string fmt_double(double v);

/// Uniform integer in [0, n) with rejection sampling; n must be > 0.
std::uint64_t rng_below(std::mt19937_64& rng, std::uint64_t n);

std::string rng_to_string(const std::mt19937_64& rng);
std::mt19937_64 rng_from_string(const std::string& s);

/// Runs fn(0..n-1) on up to max_workers threads. Rethrows the first failure
/// (lowest index) after all workers finish.
void parallel_for(std::size_t n, int max_workers, const std::function<void(std::size_t)>& fn);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

std::string iso8601_now();

}  // namespace popt
