#ifndef SPINSUM_UTIL_HPP
#define SPINSUM_UTIL_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace spinsum::util {

std::vector<std::string> split_ws(std::string_view text);
std::string join(const std::vector<std::string>& tokens, std::string_view sep);
std::string lowercase_ascii(std::string_view text);

// FNV-1a, used for config fingerprints and checkpoint comparisons.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);
std::vector<std::string> read_lines(const std::string& path);

// Runs fn(i) for i in [0, n) on up to `threads` worker threads. Work is
// chunked by index so results written to slot i are deterministic.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace spinsum::util

#endif
