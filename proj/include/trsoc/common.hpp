#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace trsoc {

// Contract violations (bad arguments, shape mismatches) throw invalid_argument;
// runtime failures (non-finite values, solver blow-ups) throw runtime_error.
template <typename... Parts>
[[noreturn]] void fail_contract(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw std::invalid_argument(os.str());
}

template <typename... Parts>
[[noreturn]] void fail_runtime(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    throw std::runtime_error(os.str());
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline double log_sum_exp(std::span<const double> x) {
    if (x.empty()) fail_contract("log_sum_exp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

inline double log_mean_exp(std::span<const double> x) {
    return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

// log sum_k w_k e^{x_k} for nonnegative weights (not necessarily normalized).
inline double log_weighted_sum_exp(std::span<const double> x, std::span<const double> w) {
    if (x.size() != w.size()) fail_contract("log_weighted_sum_exp: size mismatch");
    if (x.empty()) fail_contract("log_weighted_sum_exp: empty input");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += w[i] * std::exp(x[i] - m);
    return m + std::log(s);
}

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

// Population variance (divide by n).
inline double variance(std::span<const double> x) {
    if (x.size() < 1) fail_contract("variance: empty input");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size());
}

// Unbiased sample variance (divide by n-1).
inline double sample_variance(std::span<const double> x) {
    if (x.size() < 2) fail_contract("sample_variance: need at least 2 samples");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double standard_error(std::span<const double> x) {
    return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

inline bool all_finite(std::span<const double> x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

// Runs fn(begin, end) over disjoint index chunks. Output written by different
// chunks must not alias, which keeps results bit-identical for any thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn,
                         std::size_t min_chunk = 1024) {
    unsigned hw = std::thread::hardware_concurrency();
    std::size_t nthreads = std::max(1u, hw);
    if (n < 2 * min_chunk || nthreads == 1) {
        fn(0, n);
        return;
    }
    nthreads = std::min<std::size_t>(nthreads, (n + min_chunk - 1) / min_chunk);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace trsoc
