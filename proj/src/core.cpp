#include "cutoseen/core.hpp"

namespace cutoseen {

GaussRule1D gauss_legendre(int n) {
    if (n < 1) throw Error("gauss_legendre: need n >= 1");
    GaussRule1D rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    // Newton iteration on Legendre polynomials over [-1,1], then map to [0,1].
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int j = 2; j <= n; ++j) {
                const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
                p0 = p1;
                p1 = p2;
            }
            pp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / pp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.points[i] = 0.5 * (1.0 - x); // descending x -> ascending point
        rule.weights[i] = 1.0 / ((1.0 - x * x) * pp * pp);
    }
    return rule;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace cutoseen
