#pragma once

#include "piesn/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <memory>
#include <string>

namespace piesn {

/// A plant model: right-hand side dy/dt = N(y, u), its state Jacobian, and
/// an optional admissibility clamp applied after every integration step.
class OdeSystem {
public:
    virtual ~OdeSystem() = default;

    virtual int dim_y() const = 0;
    virtual int dim_u() const = 0;
    virtual const std::string& name() const = 0;

    virtual Vector rhs(const Vector& y, const Vector& u) const = 0;

    /// Analytic dN/dy, dim_y x dim_y. Must match central finite differences
    /// of rhs() to 1e-5 relative away from the documented kinks.
    virtual Matrix jacobian_y(const Vector& y, const Vector& u) const = 0;

    /// Project a state back into the admissible region (identity by default).
    virtual Vector clamp_state(Vector y) const { return y; }

    virtual nlohmann::json params_json() const;
};

struct VdpParams {
    double mu = 1.0;
};

/// Forced Van der Pol oscillator:
///   dh1/dt = h2
///   dh2/dt = mu (1 - h1^2) h2 - h1 + u
class VanDerPol final : public OdeSystem {
public:
    explicit VanDerPol(VdpParams p = {}) : p_(p) {}

    int dim_y() const override { return 2; }
    int dim_u() const override { return 1; }
    const std::string& name() const override { return name_; }
    Vector rhs(const Vector& y, const Vector& u) const override;
    Matrix jacobian_y(const Vector& y, const Vector& u) const override;
    nlohmann::json params_json() const override;

    const VdpParams& params() const { return p_; }

private:
    VdpParams p_;
    std::string name_ = "vdp";
};

/// Quadruple-tank parameters (areas in cm^2, g in cm/s^2, pump gains in
/// cm^3/(V s)); defaults are the benchmark values.
struct FourTankParams {
    double a1 = 28.0, a2 = 32.0, a3 = 28.0, a4 = 32.0;  // tank cross-sections A_i
    double o1 = 0.071, o2 = 0.071, o3 = 0.071, o4 = 0.071;  // orifice areas a_i
    double g = 981.0;
    double k1 = 1.0, k2 = 1.0;
    double gamma1 = 0.7, gamma2 = 0.6;
};

/// Four interconnected tanks driven by two pump voltages. Levels are clamped
/// at zero; the sqrt term is floored at h = 1e-9 cm inside the Jacobian to
/// avoid the singularity of d/dh sqrt(2 g h) at empty tanks.
class FourTank final : public OdeSystem {
public:
    explicit FourTank(FourTankParams p = {}) : p_(p) {}

    int dim_y() const override { return 4; }
    int dim_u() const override { return 2; }
    const std::string& name() const override { return name_; }
    Vector rhs(const Vector& y, const Vector& u) const override;
    Matrix jacobian_y(const Vector& y, const Vector& u) const override;
    Vector clamp_state(Vector y) const override { return y.cwiseMax(0.0); }
    nlohmann::json params_json() const override;

    const FourTankParams& params() const { return p_; }

private:
    FourTankParams p_;
    std::string name_ = "fourtank";
};

/// Electric submersible pump parameters, SI units throughout. Defaults keep
/// the published table values verbatim, including the mutually inconsistent
/// reservoir/manifold pressures; dataset configs may override the initial
/// state to a self-consistent operating point.
struct EspParams {
    double beta1 = 1.5e9, beta2 = 1.5e9;  // bulk moduli, Pa
    double vol1 = 4.054, vol2 = 9.729;    // pipe volumes, m^3
    double inertia = 1.992e8;             // fluid inertia M, kg/m^4
    double rho = 950.0;                   // density, kg/m^3
    double g = 9.81;
    double h_w = 1000.0;                  // vertical depth, m
    double prod_index = 2.32e-9;          // PI, m^3/s/Pa
    double p_r = 1.26e7;                  // reservoir pressure, Pa
    double p_m = 20.0;                    // manifold pressure, Pa
    double c_choke = 2e-5;                // choke constant
    double len1 = 500.0, len2 = 1200.0;   // pipe lengths, m
    double d1 = 0.1016, d2 = 0.1016;      // pipe diameters, m
    double area1 = 0.008107, area2 = 0.008107;  // pipe cross-sections, m^2
    double mu_visc = 0.025;               // viscosity, Pa s
    double f0 = 60.0;                     // reference frequency, Hz
    double c0 = 9.5970e2, c1 = 7.4959e3, c2 = 1.2454e6;  // head curve
    // Viscosity-correction polynomials C_H(mu), C_Q(mu), degree <= 4,
    // coefficients in ascending order; default constant 1.
    std::array<double, 5> ch_coeffs{1.0, 0.0, 0.0, 0.0, 0.0};
    std::array<double, 5> cq_coeffs{1.0, 0.0, 0.0, 0.0, 0.0};
};

/// ESP well model. States (p_bh, p_wh, q); inputs (f [Hz], z in [0,1]).
/// Choke flow uses max(p_wh - p_m, 0) under the radical; friction uses the
/// odd continuation sign(q)|q|^{7/4} so the rhs is continuous at q = 0.
class EspSystem final : public OdeSystem {
public:
    explicit EspSystem(EspParams p = {}) : p_(p) {}

    int dim_y() const override { return 3; }
    int dim_u() const override { return 2; }
    const std::string& name() const override { return name_; }
    Vector rhs(const Vector& y, const Vector& u) const override;
    Matrix jacobian_y(const Vector& y, const Vector& u) const override;
    nlohmann::json params_json() const override;

    const EspParams& params() const { return p_; }

    /// Pump head H(q, f) including the viscosity corrections.
    double head(double q, double f) const;
    double friction(double q) const;  // F1 + F2
    double choke_flow(double p_wh, double z) const;

private:
    EspParams p_;
    std::string name_ = "esp";
};

/// Factory used by configs; `params` may override any field of the named
/// system's parameter struct. Unknown names or keys raise ConfigError.
std::unique_ptr<OdeSystem> make_system(const std::string& name, const nlohmann::json& params);

/// Central finite differences of rhs, step 1e-6 (1 + |y_j|) per column; the
/// independent oracle every analytic Jacobian is checked against.
Matrix fd_jacobian(const OdeSystem& sys, const Vector& y, const Vector& u);

}  // namespace piesn
