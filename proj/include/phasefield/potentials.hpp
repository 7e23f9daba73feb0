#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phasefield {

enum class PotentialKind { SingleWell, DoubleWell };

inline std::string_view to_string(PotentialKind kind) {
    return kind == PotentialKind::SingleWell ? "single_well" : "double_well";
}

inline PotentialKind parse_potential(std::string_view name) {
    if (name == "single_well") return PotentialKind::SingleWell;
    if (name == "double_well") return PotentialKind::DoubleWell;
    throw std::invalid_argument("unknown potential '" + std::string(name) + "'");
}

/// Phase-field parameter eps in (0, 1/2].
class PhaseParams {
public:
    explicit PhaseParams(double eps) : eps_(eps) {
        if (!(eps > 0.0 && eps <= 0.5)) throw std::invalid_argument("phase-field eps must lie in (0, 1/2]");
    }
    double eps() const { return eps_; }

private:
    double eps_;
};

/// Smoothstep degradation -2t^3 + 3t^2 clamped to 0 below 0 and 1 above 1.
template <typename Scalar>
Scalar psi(Scalar t) {
    if (t <= Scalar(0)) return Scalar(0);
    if (t >= Scalar(1)) return Scalar(1);
    return t * t * (Scalar(3) - Scalar(2) * t);
}

template <typename Scalar>
Scalar psi_prime(Scalar t) {
    if (t <= Scalar(0) || t >= Scalar(1)) return Scalar(0);
    return Scalar(6) * t * (Scalar(1) - t);
}

/// (1 - eps^2) psi + eps^2, bounded below by eps^2.
template <typename Scalar>
Scalar psi_eps(Scalar t, const PhaseParams& p) {
    const Scalar e2 = Scalar(p.eps() * p.eps());
    return (Scalar(1) - e2) * psi(t) + e2;
}

template <typename Scalar>
Scalar psi_eps_prime(Scalar t, const PhaseParams& p) {
    const Scalar e2 = Scalar(p.eps() * p.eps());
    return (Scalar(1) - e2) * psi_prime(t);
}

// V and W are global polynomials; they are only ever evaluated near [0, 1].

/// SingleWell: V(t) = (t - 1)^2 / 4. DoubleWell: W(t) = 9 t^2 (t - 1)^2.
template <typename Scalar>
Scalar well(PotentialKind kind, Scalar t) {
    const Scalar d = t - Scalar(1);
    if (kind == PotentialKind::SingleWell) return d * d / Scalar(4);
    return Scalar(9) * t * t * d * d;
}

template <typename Scalar>
Scalar well_prime(PotentialKind kind, Scalar t) {
    const Scalar d = t - Scalar(1);
    if (kind == PotentialKind::SingleWell) return d / Scalar(2);
    return Scalar(18) * t * d * (Scalar(2) * t - Scalar(1));
}

}  // namespace phasefield
