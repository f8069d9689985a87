#include "gridtrip/common.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace gridtrip {

std::string to_string(DerCode c) {
    switch (c) {
    case DerCode::inv2005: return "INV2005";
    case DerCode::inv2015: return "INV2015";
    case DerCode::inv2020: return "INV2020";
    }
    return "?";
}

DerCode parse_code(std::string_view s) {
    if (s == "INV2005" || s == "2005") return DerCode::inv2005;
    if (s == "INV2015" || s == "2015") return DerCode::inv2015;
    if (s == "INV2020" || s == "2020") return DerCode::inv2020;
    throw ConfigError("unknown grid code '" + std::string(s) + "'");
}

std::string to_string(Side s) { return s == Side::under ? "under" : "over"; }

Side parse_side(std::string_view s) {
    if (s == "under") return Side::under;
    if (s == "over") return Side::over;
    throw ConfigError("unknown side '" + std::string(s) + "'");
}

std::size_t worker_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GRIDTRIP_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
    }
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace gridtrip
