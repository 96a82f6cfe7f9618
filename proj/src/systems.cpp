#include "piesn/systems.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace piesn {

using nlohmann::json;

nlohmann::json OdeSystem::params_json() const { return json::object(); }

// ---- Van der Pol ----

Vector VanDerPol::rhs(const Vector& y, const Vector& u) const {
    Vector d(2);
    d(0) = y(1);
    d(1) = p_.mu * (1.0 - y(0) * y(0)) * y(1) - y(0) + u(0);
    return d;
}

Matrix VanDerPol::jacobian_y(const Vector& y, const Vector& /*u*/) const {
    Matrix j(2, 2);
    j(0, 0) = 0.0;
    j(0, 1) = 1.0;
    j(1, 0) = -2.0 * p_.mu * y(0) * y(1) - 1.0;
    j(1, 1) = p_.mu * (1.0 - y(0) * y(0));
    return j;
}

json VanDerPol::params_json() const { return json{{"mu", p_.mu}}; }

// ---- Four-tank ----

namespace {
// sqrt(2 g h) clamps negative levels to zero; its derivative is zero there
// (the clamped branch is flat) and is floored at h = 1e-9 cm near the
// singular point so empty tanks stay finite. Physically negligible.
constexpr double kLevelFloor = 1e-9;

double outflow(double h, double g) { return std::sqrt(2.0 * g * std::max(h, 0.0)); }
double outflow_dh(double h, double g) {
    if (h < 0.0) return 0.0;
    return g / std::sqrt(2.0 * g * std::max(h, kLevelFloor));
}
}  // namespace

Vector FourTank::rhs(const Vector& y, const Vector& u) const {
    if (!all_finite(y) || !all_finite(u)) throw NumericsError("fourtank rhs: non-finite input");
    const double v1 = u(0), v2 = u(1);
    const auto& p = p_;
    Vector d(4);
    d(0) = -(p.o1 / p.a1) * outflow(y(0), p.g) + (p.o3 / p.a1) * outflow(y(2), p.g) +
           p.gamma1 * p.k1 / p.a1 * v1;
    d(1) = -(p.o2 / p.a2) * outflow(y(1), p.g) + (p.o4 / p.a2) * outflow(y(3), p.g) +
           p.gamma2 * p.k2 / p.a2 * v2;
    d(2) = -(p.o3 / p.a3) * outflow(y(2), p.g) + (1.0 - p.gamma2) * p.k2 / p.a3 * v2;
    d(3) = -(p.o4 / p.a4) * outflow(y(3), p.g) + (1.0 - p.gamma1) * p.k1 / p.a4 * v1;
    return d;
}

Matrix FourTank::jacobian_y(const Vector& y, const Vector& /*u*/) const {
    const auto& p = p_;
    Matrix j = Matrix::Zero(4, 4);
    j(0, 0) = -(p.o1 / p.a1) * outflow_dh(y(0), p.g);
    j(0, 2) = (p.o3 / p.a1) * outflow_dh(y(2), p.g);
    j(1, 1) = -(p.o2 / p.a2) * outflow_dh(y(1), p.g);
    j(1, 3) = (p.o4 / p.a2) * outflow_dh(y(3), p.g);
    j(2, 2) = -(p.o3 / p.a3) * outflow_dh(y(2), p.g);
    j(3, 3) = -(p.o4 / p.a4) * outflow_dh(y(3), p.g);
    return j;
}

json FourTank::params_json() const {
    return json{{"A1", p_.a1}, {"A2", p_.a2}, {"A3", p_.a3}, {"A4", p_.a4},
                {"a1", p_.o1}, {"a2", p_.o2}, {"a3", p_.o3}, {"a4", p_.o4},
                {"g", p_.g},   {"k1", p_.k1}, {"k2", p_.k2},
                {"gamma1", p_.gamma1}, {"gamma2", p_.gamma2}};
}

// ---- ESP ----

namespace {
double poly4(const std::array<double, 5>& c, double x) {
    return c[0] + x * (c[1] + x * (c[2] + x * (c[3] + x * c[4])));
}
}  // namespace

double EspSystem::choke_flow(double p_wh, double z) const {
    return p_.c_choke * z * std::sqrt(std::max(p_wh - p_.p_m, 0.0));
}

double EspSystem::friction(double q) const {
    // F_i = 0.158 rho L_i q^2 / (D_i A_i^2) (mu / (rho D_i q))^{1/4},
    // continued through q = 0 as sign(q) |q|^{7/4}.
    const double aq = std::abs(q);
    if (aq == 0.0) return 0.0;
    const double s = q > 0 ? 1.0 : -1.0;
    const double f1 = 0.158 * p_.rho * p_.len1 / (p_.d1 * p_.area1 * p_.area1) *
                      std::pow(p_.mu_visc / (p_.rho * p_.d1), 0.25) * std::pow(aq, 1.75);
    const double f2 = 0.158 * p_.rho * p_.len2 / (p_.d2 * p_.area2 * p_.area2) *
                      std::pow(p_.mu_visc / (p_.rho * p_.d2), 0.25) * std::pow(aq, 1.75);
    return s * (f1 + f2);
}

double EspSystem::head(double q, double f) const {
    const double ch = poly4(p_.ch_coeffs, p_.mu_visc);
    const double cq = poly4(p_.cq_coeffs, p_.mu_visc);
    const double r = q / cq * (p_.f0 / f);
    const double fr = f / p_.f0;
    return ch * (p_.c0 + p_.c1 * r - p_.c2 * r * r * fr * fr);
}

Vector EspSystem::rhs(const Vector& y, const Vector& u) const {
    if (!all_finite(y) || !all_finite(u)) throw NumericsError("esp rhs: non-finite input");
    const double p_bh = y(0), p_wh = y(1), q = y(2);
    const double f = u(0), z = u(1);
    const double q_r = p_.prod_index * (p_.p_r - p_bh);
    const double q_c = choke_flow(p_wh, z);
    const double dp_f = friction(q);
    const double dp_p = p_.rho * p_.g * head(q, f);
    Vector d(3);
    d(0) = p_.beta1 / p_.vol1 * (q_r - q);
    d(1) = p_.beta2 / p_.vol2 * (q - q_c);
    d(2) = (p_bh - p_wh - p_.rho * p_.g * p_.h_w - dp_f + dp_p) / p_.inertia;
    return d;
}

Matrix EspSystem::jacobian_y(const Vector& y, const Vector& u) const {
    const double p_wh = y(1), q = y(2);
    const double f = u(0), z = u(1);
    Matrix j = Matrix::Zero(3, 3);
    j(0, 0) = -p_.beta1 / p_.vol1 * p_.prod_index;
    j(0, 2) = -p_.beta1 / p_.vol1;
    // d q_c / d p_wh, zero in the clamped region p_wh <= p_m.
    double dqc = 0.0;
    if (p_wh - p_.p_m > 0.0) dqc = p_.c_choke * z / (2.0 * std::sqrt(p_wh - p_.p_m));
    j(1, 1) = -p_.beta2 / p_.vol2 * dqc;
    j(1, 2) = p_.beta2 / p_.vol2;
    j(2, 0) = 1.0 / p_.inertia;
    j(2, 1) = -1.0 / p_.inertia;
    // d/dq [ -friction + rho g H ]
    const double aq = std::abs(q);
    double dfric = 0.0;
    if (aq > 0.0) {
        const double k1 = 0.158 * p_.rho * p_.len1 / (p_.d1 * p_.area1 * p_.area1) *
                          std::pow(p_.mu_visc / (p_.rho * p_.d1), 0.25);
        const double k2 = 0.158 * p_.rho * p_.len2 / (p_.d2 * p_.area2 * p_.area2) *
                          std::pow(p_.mu_visc / (p_.rho * p_.d2), 0.25);
        dfric = 1.75 * (k1 + k2) * std::pow(aq, 0.75);
    }
    const double ch = poly4(p_.ch_coeffs, p_.mu_visc);
    const double cq = poly4(p_.cq_coeffs, p_.mu_visc);
    const double fr = f / p_.f0;
    const double drdq = (p_.f0 / f) / cq;
    const double r = q / cq * (p_.f0 / f);
    const double dhead = ch * (p_.c1 * drdq - 2.0 * p_.c2 * r * drdq * fr * fr);
    j(2, 2) = (-dfric + p_.rho * p_.g * dhead) / p_.inertia;
    return j;
}

json EspSystem::params_json() const {
    return json{{"beta1", p_.beta1}, {"beta2", p_.beta2}, {"V1", p_.vol1}, {"V2", p_.vol2},
                {"M", p_.inertia},   {"rho", p_.rho},     {"g", p_.g},     {"h_w", p_.h_w},
                {"PI", p_.prod_index}, {"p_r", p_.p_r},   {"p_m", p_.p_m}, {"C_c", p_.c_choke},
                {"L1", p_.len1},     {"L2", p_.len2},     {"D1", p_.d1},   {"D2", p_.d2},
                {"A1", p_.area1},    {"A2", p_.area2},    {"mu", p_.mu_visc}, {"f0", p_.f0},
                {"c0", p_.c0},       {"c1", p_.c1},       {"c2", p_.c2},
                {"ch_coeffs", p_.ch_coeffs}, {"cq_coeffs", p_.cq_coeffs}};
}

// ---- factory / finite differences ----

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::unique_ptr<OdeSystem> make_system(const std::string& name, const json& params) {
    if (!params.is_object() && !params.is_null())
        throw ConfigError("system.params: expected an object");
    const json p = params.is_null() ? json::object() : params;
    auto check_keys = [&p](std::initializer_list<const char*> allowed) {
        for (auto it = p.begin(); it != p.end(); ++it) {
            bool ok = false;
            for (const char* k : allowed)
                if (it.key() == k) ok = true;
            if (!ok) throw ConfigError("system.params: unknown key '" + it.key() + "'");
        }
    };
    if (name == "vdp") {
        check_keys({"mu"});
        VdpParams vp;
        read_field(p, "mu", vp.mu);
        return std::make_unique<VanDerPol>(vp);
    }
    if (name == "fourtank") {
        check_keys({"A1", "A2", "A3", "A4", "a1", "a2", "a3", "a4", "g", "k1", "k2",
                    "gamma1", "gamma2"});
        FourTankParams fp;
        read_field(p, "A1", fp.a1);
        read_field(p, "A2", fp.a2);
        read_field(p, "A3", fp.a3);
        read_field(p, "A4", fp.a4);
        read_field(p, "a1", fp.o1);
        read_field(p, "a2", fp.o2);
        read_field(p, "a3", fp.o3);
        read_field(p, "a4", fp.o4);
        read_field(p, "g", fp.g);
        read_field(p, "k1", fp.k1);
        read_field(p, "k2", fp.k2);
        read_field(p, "gamma1", fp.gamma1);
        read_field(p, "gamma2", fp.gamma2);
        if (fp.gamma1 <= 0 || fp.gamma1 >= 1 || fp.gamma2 <= 0 || fp.gamma2 >= 1)
            throw ConfigError("fourtank: gamma1/gamma2 must lie in (0,1)");
        return std::make_unique<FourTank>(fp);
    }
    if (name == "esp") {
        check_keys({"beta1", "beta2", "V1", "V2", "M", "rho", "g", "h_w", "PI", "p_r", "p_m",
                    "C_c", "L1", "L2", "D1", "D2", "A1", "A2", "mu", "f0", "c0", "c1", "c2",
                    "ch_coeffs", "cq_coeffs"});
        EspParams ep;
        read_field(p, "beta1", ep.beta1);
        read_field(p, "beta2", ep.beta2);
        read_field(p, "V1", ep.vol1);
        read_field(p, "V2", ep.vol2);
        read_field(p, "M", ep.inertia);
        read_field(p, "rho", ep.rho);
        read_field(p, "g", ep.g);
        read_field(p, "h_w", ep.h_w);
        read_field(p, "PI", ep.prod_index);
        read_field(p, "p_r", ep.p_r);
        read_field(p, "p_m", ep.p_m);
        read_field(p, "C_c", ep.c_choke);
        read_field(p, "L1", ep.len1);
        read_field(p, "L2", ep.len2);
        read_field(p, "D1", ep.d1);
        read_field(p, "D2", ep.d2);
        read_field(p, "A1", ep.area1);
        read_field(p, "A2", ep.area2);
        read_field(p, "mu", ep.mu_visc);
        read_field(p, "f0", ep.f0);
        read_field(p, "c0", ep.c0);
        read_field(p, "c1", ep.c1);
        read_field(p, "c2", ep.c2);
        read_field(p, "ch_coeffs", ep.ch_coeffs);
        read_field(p, "cq_coeffs", ep.cq_coeffs);
        return std::make_unique<EspSystem>(ep);
    }
    throw ConfigError("unknown system '" + name + "' (expected vdp, fourtank, esp)");
}

Matrix fd_jacobian(const OdeSystem& sys, const Vector& y, const Vector& u) {
    const int n = sys.dim_y();
    Matrix j(n, n);
    for (int col = 0; col < n; ++col) {
        const double h = 1e-6 * (1.0 + std::abs(y(col)));
        Vector yp = y, ym = y;
        yp(col) += h;
        ym(col) -= h;
        j.col(col) = (sys.rhs(yp, u) - sys.rhs(ym, u)) / (2.0 * h);
    }
    return j;
}

}  // namespace piesn
