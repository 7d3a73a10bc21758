#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace coopercept::util {

// --- logging ------------------------------------------------------------

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

// Level comes from the COOPERCEPT_LOG environment variable
// (debug|info|warn|error|quiet); defaults to info.
LogLevel log_level();
void set_log_level(LogLevel lvl);
void log(LogLevel lvl, const std::string& msg);
inline void log_debug(const std::string& m) { log(LogLevel::debug, m); }
inline void log_info(const std::string& m) { log(LogLevel::info, m); }
inline void log_warn(const std::string& m) { log(LogLevel::warn, m); }
inline void log_error(const std::string& m) { log(LogLevel::error, m); }

// --- hashing ------------------------------------------------------------

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::string fnv1a64_hex(const std::string& bytes);
// Hash of a file's content, formatted as "fnv1a:<16 hex digits>".
std::string hash_file(const std::filesystem::path& p);

// --- CSV ----------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based line number of each row in the source file (for diagnostics).
    std::vector<long> row_lines;
};

// Reads a comma-separated file with a mandatory header line. Blank lines are
// skipped. Throws ParseError on ragged rows.
CsvTable read_csv(const std::filesystem::path& p);

double parse_double(const std::string& s, const std::string& path, long line);
std::int64_t parse_int(const std::string& s, const std::string& path, long line);

// Fixed-format helpers so emitted files are byte-stable across runs.
std::string format_fixed(double v, int decimals);

// --- parallelism ---------------------------------------------------------

// Runs fn(i) for i in [0, n) on at most `jobs` threads. Results must be
// written to index-addressed storage by the caller; completion order is not
// defined but the call returns only when all indices ran. The first exception
// thrown by any fn is rethrown on the calling thread.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace coopercept::util

namespace coopercept {
using namespace util;  // NOLINT: utilities are part of the library surface
}
