#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace h1stab {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const Vec2&) const = default;
};

inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Thrown when a matrix expected to be symmetric positive definite is not.
class NotSpdError : public std::runtime_error {
public:
    explicit NotSpdError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a refinement closure loop exceeds its iteration cap.
class ClosureCapError : public std::runtime_error {
public:
    explicit ClosureCapError(const std::string& what) : std::runtime_error(what) {}
};

/// Exact representation of a + b*log2(3).  Generations of red/green/blue
/// descendants of a parallelogram are of this form (area factors 2^k and
/// 8/3), so set membership can be tested without floating-point slack.
struct GenValue {
    std::int64_t a = 0;
    std::int64_t b = 0;

    double value() const { return double(a) + double(b) * 1.5849625007211562; }
    bool operator==(const GenValue&) const = default;
};

inline GenValue operator-(GenValue l, GenValue r) { return {l.a - r.a, l.b - r.b}; }
inline GenValue operator+(GenValue l, GenValue r) { return {l.a + r.a, l.b + r.b}; }
inline bool gen_less(GenValue l, GenValue r) { return l.value() < r.value() - 1e-12; }

/// Exact area ratio |K_T|/|T| as a reduced int64 fraction.
struct Rational {
    std::int64_t num = 1;
    std::int64_t den = 1;

    double value() const { return double(num) / double(den); }
    bool operator==(const Rational&) const = default;

    Rational times(Rational o) const {
        // cross-reduce first so intermediates stay small
        std::int64_t g1 = std::gcd(num, o.den);
        std::int64_t g2 = std::gcd(o.num, den);
        std::int64_t n1 = num / g1, d2 = o.den / g1;
        std::int64_t n2 = o.num / g2, d1 = den / g2;
        if (n1 != 0 && std::abs(n2) > std::numeric_limits<std::int64_t>::max() / std::abs(n1))
            throw std::overflow_error("Rational overflow (generation too deep)");
        return {n1 * n2, d1 * d2};
    }

    /// log2(num/den) as an exact GenValue; requires num = 2^k or 2^k*3^-1 form.
    GenValue log2_exact() const {
        std::int64_t n = num, d = den, threes = 0;
        while (d % 3 == 0) { d /= 3; ++threes; }
        while (n % 3 == 0) { n /= 3; --threes; }
        auto log2_pow2 = [](std::int64_t v) {
            std::int64_t k = 0;
            while (v % 2 == 0) { v /= 2; ++k; }
            if (v != 1) throw std::domain_error("area ratio is not 2^a * 3^b");
            return k;
        };
        return {log2_pow2(n) - log2_pow2(d), threes};
    }
};

inline int thread_count() {
    if (const char* env = std::getenv("H1STAB_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : int(hc);
}

/// Chunked parallel map over [0, n); f(begin, end) processes one chunk.
inline void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& f) {
    int nt = thread_count();
    if (nt <= 1 || n < 2) {
        f(0, n);
        return;
    }
    std::size_t chunks = std::min<std::size_t>(nt, n);
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c) {
        std::size_t b = n * c / chunks, e = n * (c + 1) / chunks;
        pool.emplace_back([&f, b, e] { f(b, e); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace h1stab
