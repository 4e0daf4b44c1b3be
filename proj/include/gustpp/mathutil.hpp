#pragma once

// Numerically stable scalar helpers and a small deterministic RNG facade
// shared across the library. All sampling goes through Rng so that runs are
// reproducible for a given seed regardless of platform libstdc++ internals.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace gustpp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log(1 + exp(t)) without overflow for large |t|.
inline double softplus(double t) {
    if (t > 30.0) return t;
    if (t < -30.0) return std::exp(t);
    return std::log1p(std::exp(t));
}

// d/dt softplus(t) = standard logistic CDF.
inline double logistic_cdf_std(double t) {
    if (t >= 0.0) {
        return 1.0 / (1.0 + std::exp(-t));
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Standard logistic density f = F(1-F), evaluated stably via exp(-|t|).
inline double logistic_pdf_std(double t) {
    const double e = std::exp(-std::abs(t));
    const double denom = 1.0 + e;
    return e / (denom * denom);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("logit: p must be in (0,1)");
    return std::log(p) - std::log1p(-p);
}

// h(q) = log1p(q) - q/(1+q), the tail integral of the squared logistic
// survival function expressed in q = exp(-t); series below 1e-4 where the
// direct difference cancels.
inline double logistic_tail_h(double q) {
    if (q < 1e-4) {
        return q * q * (0.5 - 2.0 * q / 3.0 + 0.75 * q * q - 0.8 * q * q * q);
    }
    return std::log1p(q) - q / (1.0 + q);
}

// hp(q) = h(q) (1+q)^2 / q^2, bounded near 1/2 as q -> 0.
inline double logistic_tail_hp(double q) {
    const double one_q = 1.0 + q;
    if (q < 1e-4) {
        return (0.5 - 2.0 * q / 3.0 + 0.75 * q * q - 0.8 * q * q * q) * one_q * one_q;
    }
    return (std::log1p(q) - q / one_q) * one_q * one_q / (q * q);
}

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Upper-tail critical value of the chi-square distribution (Wilson-Hilferty
// approximation; adequate for the df >= 10 uniformity checks used here).
inline double chi2_critical(int df, double upper_tail_prob) {
    // invert the normal via Acklam-style rational approximation on the tail
    auto norm_quantile = [](double p) {
        // Beasley-Springer-Moro
        static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
        static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
        static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
        static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
        const double plow = 0.02425, phigh = 1.0 - plow;
        double q, r;
        if (p < plow) {
            q = std::sqrt(-2.0 * std::log(p));
            return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        if (p > phigh) {
            q = std::sqrt(-2.0 * std::log(1.0 - p));
            return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                   ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
        }
        q = p - 0.5;
        r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    };
    const double z = norm_quantile(1.0 - upper_tail_prob);
    const double k = 2.0 / (9.0 * df);
    const double t = 1.0 - k + z * std::sqrt(k);
    return df * t * t * t;
}

// splitmix64 step, used to derive independent seed streams from (seed, tags).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
    return derive_seed(splitmix64(seed ^ splitmix64(tag)), rest...);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    // Lemire-style unbiased-enough integer draw in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    double normal(double mean = 0.0, double sd = 1.0) {
        // Box-Muller, fixed two-uniform consumption per draw
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sd * r * std::cos(2.0 * M_PI * u2);
    }

    double logistic(double mu, double sigma) {
        double u = uniform();
        while (u <= 0.0 || u >= 1.0) u = uniform();
        return mu + sigma * logit(u);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), order of selection preserved
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + uniform_int(n - i);
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

  private:
    std::mt19937_64 gen_;
};

inline double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_of: empty");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation (divisor n-1); the convention used throughout.
inline double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("sd_of: need at least 2 values");
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median_of: empty");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace gustpp
