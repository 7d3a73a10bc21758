#include "coopercept/util.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "coopercept/error.hpp"

namespace coopercept::util {

namespace {

LogLevel parse_level(const char* s) {
    if (!s) return LogLevel::info;
    std::string v(s);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "warn") return LogLevel::warn;
    if (v == "error") return LogLevel::error;
    if (v == "quiet") return LogLevel::quiet;
    return LogLevel::info;
}

LogLevel& level_slot() {
    static LogLevel lvl = parse_level(std::getenv("COOPERCEPT_LOG"));
    return lvl;
}

std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

LogLevel log_level() { return level_slot(); }
void set_log_level(LogLevel lvl) { level_slot() = lvl; }

void log(LogLevel lvl, const std::string& msg) {
    if (lvl < level_slot() || level_slot() == LogLevel::quiet) return;
    static const char* names[] = {"debug", "info", "warn", "error"};
    std::lock_guard<std::mutex> lock(log_mutex());
    std::cerr << "[coopercept " << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return std::string(buf);
}

std::string hash_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open file for hashing: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return "fnv1a:" + fnv1a64_hex(ss.str());
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

CsvTable read_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open CSV file: " + p.string());
    CsvTable t;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(p.string(), lineno,
                             "expected " + std::to_string(t.header.size()) + " fields, got " +
                                 std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
        t.row_lines.push_back(lineno);
    }
    if (t.header.empty()) throw ParseError(p.string(), 1, "missing CSV header");
    return t;
}

double parse_double(const std::string& s, const std::string& path, long line) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(path, line, "not a number: '" + s + "'");
    return v;
}

std::int64_t parse_int(const std::string& s, const std::string& path, long line) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError(path, line, "not an integer: '" + s + "'");
    return v;
}

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return std::string(buf);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (jobs < 1) jobs = 1;
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace coopercept::util
