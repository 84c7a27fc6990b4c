#include "verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "rieszlab/parametrix.hpp"
#include "rieszlab/riesz.hpp"
#include "rieszlab/special_fn.hpp"
#include "rieszlab/spectral.hpp"

namespace rieszlab::verify {

namespace {

constexpr double pi = std::numbers::pi;

ModelManifold model(std::vector<EndSpec> ends) {
  std::vector<ModelManifold> frags;
  for (const auto& e : ends) frags.push_back(build_end(e));
  return connect_sum(frags);
}

Vec random_field(const ModelManifold& M, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  Vec f = Vec::Zero(M.num_vertices);
  for (int v = 0; v < M.num_vertices; ++v)
    if (!M.boundary[v]) f[v] = g(rng);
  return f;
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

Check upper(const std::string& name, double x, double bound, std::string known = {}) {
  Check c{name, x, "<= " + fmt(bound), x <= bound, {}};
  if (!c.pass) c.known = std::move(known);
  return c;
}

Check lower(const std::string& name, double x, double bound, std::string known = {}) {
  Check c{name, x, ">= " + fmt(bound), x >= bound, {}};
  if (!c.pass) c.known = std::move(known);
  return c;
}

Check band(const std::string& name, double x, double centre, double tol, std::string known = {}) {
  Check c{name, x, fmt(centre) + " +- " + fmt(tol), std::abs(x - centre) <= tol, {}};
  if (!c.pass) c.known = std::move(known);
  return c;
}

double spread(const std::vector<double>& v) {
  return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
}

// On-diagonal heat kernel at the centre of the Dirichlet cube end Z^n x C_m of
// radius R, from the separable path modes and the discrete cycle spectrum.
double end_heat_diagonal(int n, const std::vector<int>& cycles, int R, double t) {
  double s = 0;
  for (int j = 1; j <= 2 * R - 1; ++j) {
    const double lam = 2 - 2 * std::cos(j * pi / (2 * R));
    const double q = std::sin(j * pi / 2);
    s += std::exp(-t * lam) * q * q / R;
  }
  const std::vector<double> y0(cycles.size(), 0.0);
  return std::pow(s, n) * (cycles.empty() ? 1.0 : torus_heat(cycles, t, y0, y0));
}

// ---------------------------------------------------------------------------

CriterionResult bessel_identity() {
  CriterionResult r;
  double worst = 0, worst3 = 0;
  const std::vector<double> ks{0.05, 0.2, 0.5, 1.0, 2.0}, rs{0.5, 1.0, 2.0, 5.0, 10.0};
  for (double a : {3.0, 4.0, 5.0, 6.0})
    for (double k : ks)
      for (double x : rs) {
        const auto id = bessel_integral_identity(a, k, x);
        worst = std::max(worst, id.relerr());
        if (a == 3) {
          const double closed = std::exp(-k * x) * 2 * std::sqrt(pi) / x;
          worst3 = std::max(worst3, std::abs(id.lhs - closed) / closed);
        }
      }
  r.checks.push_back(upper("max relerr, a in {3,4,5,6}, 5x5 (k,r) grid", worst, 1e-6));
  r.checks.push_back(upper("a = 3 closed form relerr", worst3, 1e-8));
  return r;
}

CriterionResult bessel_ode() {
  CriterionResult r;
  double worst = 0;
  for (double a : {3.0, 4.0, 5.0, 6.0})
    for (int s = 0; s < 50; ++s) {
      const double x = 0.05 * std::pow(600.0, s / 49.0);  // 0.05 .. 30
      const auto L = bessel_L(a, x);
      worst = std::max(worst, std::abs(L.ode_residual()) / std::abs(L.value));
    }
  r.checks.push_back(upper("max |f'' + (a-1)f'/r - f| / f over 4 x 50 points", worst, 1e-6));
  return r;
}

CriterionResult multiplier_identity() {
  CriterionResult r;
  const auto M = model({{3, {}, 4}, {3, {}, 4}});
  const auto D = laplacian(M);
  const auto S = dense_spectrum(D);
  MultiplierOperator T(D, {1.0});
  double worst = 0;
  for (unsigned s = 1; s <= 3; ++s) {
    const Vec f = D.restrict(random_field(M, s));
    const Vec ref = dense_function_apply(S, [](double x) { return 1 / std::sqrt(x); }, f);
    worst = std::max(worst, (T.apply_low(f) + T.apply_high(f) - ref).norm() / ref.norm());
  }
  r.data["vertices"] = M.num_vertices;
  r.checks.push_back(upper("relerr of F_< + F_> against dense Delta^{-1/2}", worst, 1e-6));
  return r;
}

CriterionResult isometry() {
  CriterionResult r;
  const std::vector<std::vector<EndSpec>> models{{{3, {}, 8}},
                                                 {{3, {5}, 6}},
                                                 {{3, {}, 6}, {3, {}, 6}},
                                                 {{3, {}, 6}, {4, {}, 6}},
                                                 {{3, {3}, 5}, {4, {}, 5}, {3, {}, 5}}};
  double worst = 0;
  for (size_t m = 0; m < models.size(); ++m) {
    const auto M = model(models[m]);
    RieszOperator T(M, RieszMode::quadrature);
    for (unsigned s = 1; s <= 20; ++s) {
      const Vec f = random_field(M, 1000 * unsigned(m) + s);
      worst = std::max(worst, std::abs(T.apply(f).norm() / f.norm() - 1));
    }
  }
  r.data["models"] = models.size();
  r.checks.push_back(upper("max | ||Tf||_2 / ||f||_2 - 1 |, 20 fields per model", worst, 1e-8));
  return r;
}

CriterionResult heat_crossover() {
  CriterionResult r;
  const int R = 64;
  auto slope = [&](double t0, double t1) {
    std::vector<double> ts, ps;
    for (int s = 0; s <= 8; ++s) {
      const double t = t0 * std::pow(t1 / t0, s / 8.0);
      ts.push_back(t);
      ps.push_back(end_heat_diagonal(3, {5}, R, t));
    }
    return fit_loglog(ts, ps).slope;
  };
  const double a = slope(3, 15), b = slope(100, 400);
  r.data["R"] = R;
  r.checks.push_back(band("slope t in [3,15]", a, -2.0, 0.15,
                          "the C5 factor equilibrates at t ~ 1 (gap 2 - 2cos(2pi/5) = 1.38), so [3,15] is already "
                          "in the crossover"));
  r.checks.push_back(band("slope t in [100,400]", b, -1.5, 0.15));
  return r;
}

CriterionResult lemma_uv() {
  CriterionResult r;
  const auto M = model({{3, {}, 16}, {4, {}, 16}});
  ParametrixModel P(M);
  // v_2 lives in the collar of the 4-end; u is read on the 3-end
  const auto s = solve_lemma_uv(M, P.v(2), {0.0, 0.02, 0.05, 0.1});
  const double su = fit_decay(M, 1, s.u[0], 4, 8, 1, 3 * M.h).slope;
  const double sg = fit_decay(M, 1, s.grad[0], 4, 8, 1, 3 * M.h).slope;
  const std::vector<double> lu(s.lipschitz_u.begin() + 1, s.lipschitz_u.end());
  const std::vector<double> lg(s.lipschitz_grad.begin() + 1, s.lipschitz_grad.end());
  r.data["lipschitz_u"] = lu;
  r.data["lipschitz_grad"] = lg;
  r.data["residual"] = *std::max_element(s.residual.begin(), s.residual.end());
  r.checks.push_back(band("slope |u(.,0)|, d in [4,8]", su, -1.0, 0.3,
                          "Dirichlet truncation: 1/r - 1/R_eff steepens the window; -1.41/-1.21/-1.13/-1.06 at "
                          "R = 16/24/32/48"));
  r.checks.push_back(band("slope |grad u(.,0)|, d in [4,8]", sg, -2.0, 0.4));
  const std::string gap =
      "box spectral gap: for k^2 < lambda_1 the map k -> u(k) is analytic in k^2, so the ratio grows like k";
  r.checks.push_back(upper("Lipschitz ratio spread of u, k in {0.02,0.05,0.1}", spread(lu), 2.0, gap));
  r.checks.push_back(upper("Lipschitz ratio spread of grad u", spread(lg), 2.0, gap));
  return r;
}

CriterionResult parametrix_exactness(const VerifyOptions& opt) {
  CriterionResult r;
  const auto M = model({{3, {}, 12}, {4, {}, 12}});
  ParametrixModel P(M);
  const auto choice = choose_k0(P, geometric_grid(1e-3, 1.0, 4));
  const auto grid = geometric_grid(1e-3, 1.0, 16);
  std::vector<double> below;
  for (double k : grid)
    if (k <= choice.k0 * (1 + 1e-12)) below.push_back(k);
  std::vector<double> ks;
  for (int a = 0; a < 5; ++a) ks.push_back(below[size_t(std::lround(a * (below.size() - 1) / 4.0))]);
  const auto probes = parametrix_probes(M, 10);
  SparseOperator D = P.laplacian();
  if (opt.fault_laplacian != 0) D.A *= 1 + opt.fault_laplacian;
  double worst = 0;
  std::vector<double> hs;
  P.precompute_u(ks);
  for (double k : ks) {
    ParametrixBundle B(P, k);
    for (int y : probes) {
      const Vec c = B.resolvent_column(y);
      Vec res = D.apply(c) + k * k * D.restrict(c);
      res[y] -= 1.0;
      worst = std::max(worst, res.norm());
    }
    hs.push_back(B.hs_norm_S());
  }
  r.data["k0"] = choice.k0;
  r.data["k"] = ks;
  r.data["hs_norm_S"] = hs;
  r.data["probes"] = probes;
  r.checks.push_back(upper("max ||(Delta+k^2)(G+GS) delta_y - delta_y||, 10 probes x 5 k", worst, 1e-5));
  r.checks.push_back(upper("max/min ||S(k)||_HS over the k values", spread(hs), 3.0));
  return r;
}

CriterionResult weight_exponents() {
  CriterionResult r;
  const auto M = model({{3, {}, 16}, {4, {}, 16}});
  ParametrixModel P(M);
  ParametrixBundle B(P, 0.0);
  const auto w = weight_fits(B, 4, 8);
  for (int e = 0; e < 2; ++e) {
    const double n = M.ends[e].n;
    const std::string t = " (end " + std::to_string(e + 1) + ", n = " + fmt(n) + ")";
    r.checks.push_back(upper("E right slope" + t, w.E_right[e].slope, -(n - 1) + 0.4));
    r.checks.push_back(upper("GS left slope" + t, w.GS_left[e].slope, -(n - 2) + 0.4));
    r.checks.push_back(upper("GS right slope" + t, w.GS_right[e].slope, -(n - 1) + 0.4));
    r.checks.push_back(upper("grad GS left slope" + t, w.gradGS_left[e].slope, -(n - 1) + 0.4));
    r.checks.push_back(lower("min |G3| / |GS| at large d" + t, w.G3_over_GS[e], 1.0));
  }
  return r;
}

CriterionResult high_energy() {
  CriterionResult r;
  const auto M = model({{3, {}, 20}, {3, {}, 5}});
  const double k0 = 1.0;
  const std::vector<int> ys{vertex_at(M, 1, {10, 0, 0}), vertex_at(M, 1, {0, 10, 0}), vertex_at(M, 1, {0, 0, -10})};
  const auto rep = high_energy_schur_test(M, k0, ys, {2, 4, 8}, 4, 6);
  const double rate = *std::min_element(rep.rate.begin(), rep.rate.end());
  const double leak = *std::max_element(rep.cone_leakage.begin(), rep.cone_leakage.end());
  double ratio = std::numeric_limits<double>::infinity();
  for (const auto& m : rep.annulus_mass) ratio = std::min(ratio, m[1] / m[2]);
  r.data["rate"] = rep.rate;
  r.data["column_l1"] = rep.column_l1;
  r.data["row_l1"] = rep.row_l1;
  r.data["symmetry_defect"] = rep.symmetry_defect;
  r.checks.push_back(lower("annulus L2 mass decay rate of grad G''", rate, k0 / 4));
  r.checks.push_back(lower("mass(r = 4) / mass(r = 8)", ratio, std::exp(k0 * 4 / 4)));
  r.checks.push_back(upper("G' leakage outside the 1.3 r cone, r = 6", leak, 1e-3));
  return r;
}

CriterionResult main_theorem() {
  CriterionResult r;
  const std::vector<int> Rs{8, 12, 16};
  ScalingModel m{"n3-n4", {{3, {}, 8}, {4, {}, 8}}};
  const auto table = scaling_study({m}, {2, 2.5, 3, 4}, Rs);
  auto row = [&](double p) {
    for (const auto& x : table.rows)
      if (x.p == p) return x;
    throw std::logic_error("missing row");
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& x : table.rows)
    rows.push_back({{"p", x.p}, {"R", x.R}, {"lower_bound", x.lower_bound}, {"witness", x.witness_id},
                    {"slope", x.slope}, {"classification", x.classification}});
  r.data["table"] = rows;
  r.checks.push_back(upper("p = 2 lower-bound slope", row(2).slope, 0.05));
  r.checks.push_back(upper("p = 2.5 lower-bound slope", row(2.5).slope, 0.05));
  r.checks.push_back(band("p = 4 lower-bound slope", row(4).slope, 0.25, 0.15,
                          "the rank-one term is O(1e-2) of the local O(1) part at R <= 16; it cannot move the "
                          "family maximum (see the off-end block ratio in the data)"));
  const auto r3 = row(3);
  r.checks.push_back({"p = 3 classified inconclusive-by-design", r3.classification == "inconclusive-by-design" ? 1.0 : 0.0,
                      "1", r3.classification == "inconclusive-by-design", {}});
  r.checks.push_back(lower("p = 3 triple-log diagnostic", r3.triple_log, 1e-12));
  std::vector<double> weak, off, lr;
  for (int R : Rs) {
    const auto M = model({{3, {}, R}, {4, {}, R}});
    RieszOperator T(M, RieszMode::quadrature);
    weak.push_back(weak11_test(T, spread_sources(M, {0.25})).max);
    off.push_back(unboundedness_witness(T, 1, 4.0).realized_off_end);
    lr.push_back(R);
  }
  r.data["weak11"] = weak;
  r.data["off_end_ratio_p4"] = off;
  r.data["off_end_slope_p4"] = fit_loglog(lr, off).slope;
  r.checks.push_back(upper("weak (1,1) functional max/min over R", spread(weak), 2.0));
  return r;
}

CriterionResult single_end() {
  CriterionResult r;
  const std::vector<int> Rs{8, 12, 16};
  double worst = 0;
  for (int R : Rs) {
    const auto M = model({{3, {}, R}});
    RieszOperator T(M, RieszMode::quadrature);
    for (double p : {2.0, 3.0, 4.0}) worst = std::max(worst, unboundedness_witness(T, 1, p).a_normalised);
  }
  r.checks.push_back(upper("||a||_p / ||tau||_p, p in {2,3,4}", worst, 1e-6));
  ScalingModel m{"n3", {{3, {}, 8}}};
  const auto table = scaling_study({m}, {2, 3, 4}, Rs);
  for (double p : {2.0, 3.0, 4.0})
    for (const auto& x : table.rows)
      if (x.p == p && x.R == Rs[0])
        r.checks.push_back({"p = " + fmt(p) + " classified bounded (slope " + fmt(x.slope, 3) + ")",
                            x.classification == "bounded" ? 1.0 : 0.0, "1", x.classification == "bounded", {}});
  return r;
}

CriterionResult multiplier_bounds() {
  CriterionResult r;
  std::vector<double> l1, sob;
  for (int R : {8, 12, 16}) {
    const auto M = model({{3, {}, R}, {4, {}, R}});
    const auto D = laplacian(M);
    const auto src = spread_sources(M);
    l1.push_back(multiplier_L1_norm_test(D, 1.0, src).max);
    sob.push_back(sobolev_embedding_test(D, sobolev_order(4), src).max);
  }
  r.data["L1"] = l1;
  r.data["sobolev"] = sob;
  r.checks.push_back(upper("||G(sqrt(Delta))||_{1->1} max/min over R", spread(l1), 1.5));
  r.checks.push_back(upper("||(1+Delta)^{-2}||_{2->inf} max/min over R", spread(sob), 1.5));
  return r;
}

}  // namespace

bool CriterionResult::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

bool CriterionResult::known_failure() const {
  if (pass()) return false;
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass || !c.known.empty(); });
}

const std::vector<CriterionInfo>& criteria() {
  static const std::vector<CriterionInfo> list{
      {1, "Bessel integral identity", "bessel"},
      {2, "Bessel ODE residual", "bessel"},
      {3, "multiplier split identity", "multiplier"},
      {4, "L2 partial isometry", "riesz"},
      {5, "heat kernel dimension crossover", "heat"},
      {6, "u decay and k-Lipschitz bounds", "parametrix"},
      {7, "parametrix exactness", "parametrix"},
      {8, "weight exponents", "parametrix"},
      {9, "high-energy decay", "wave"},
      {10, "main theorem surrogate", "riesz"},
      {11, "single-end control", "riesz"},
      {12, "multiplier L1 and Sobolev surrogates", "multiplier"},
  };
  return list;
}

std::vector<int> select(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    bool found = false;
    for (const auto& c : criteria())
      if (c.group == item || std::to_string(c.id) == item) {
        out.push_back(c.id);
        found = true;
      }
    if (!found) throw std::invalid_argument("unknown criterion or group: " + item);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CriterionResult run_criterion(int id, const VerifyOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  CriterionResult r;
  switch (id) {
    case 1: r = bessel_identity(); break;
    case 2: r = bessel_ode(); break;
    case 3: r = multiplier_identity(); break;
    case 4: r = isometry(); break;
    case 5: r = heat_crossover(); break;
    case 6: r = lemma_uv(); break;
    case 7: r = parametrix_exactness(opt); break;
    case 8: r = weight_exponents(); break;
    case 9: r = high_energy(); break;
    case 10: r = main_theorem(); break;
    case 11: r = single_end(); break;
    case 12: r = multiplier_bounds(); break;
    default: throw std::invalid_argument("no criterion " + std::to_string(id));
  }
  r.id = id;
  r.name = criteria()[id - 1].name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<CriterionResult> verify_all(const VerifyOptions& opt) {
  std::vector<CriterionResult> out;
  for (const auto& c : criteria())
    if (opt.only.empty() || std::find(opt.only.begin(), opt.only.end(), c.id) != opt.only.end())
      out.push_back(run_criterion(c.id, opt));
  return out;
}

std::string format_line(const CriterionResult& r) {
  std::ostringstream os;
  os << "criterion " << r.id << " (" << r.name << "): ";
  if (r.pass()) os << "PASS";
  else if (r.known_failure()) os << "FAIL (known)";
  else os << "FAIL";
  os << " [" << fmt(r.seconds, 3) << " s]";
  for (const auto& c : r.checks) {
    os << "\n    " << (c.pass ? "ok   " : "FAIL ") << c.name << " = " << fmt(c.measured, 6) << " (target " << c.target
       << ")";
    if (!c.pass && !c.known.empty()) os << "\n         known: " << c.known;
  }
  return os.str();
}

nlohmann::json to_json(const CriterionResult& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["name"] = r.name;
  j["status"] = r.pass() ? "pass" : r.known_failure() ? "fail-known" : "fail";
  j["seconds"] = r.seconds;
  for (const auto& c : r.checks)
    j["checks"].push_back(
        {{"name", c.name}, {"measured", c.measured}, {"target", c.target}, {"pass", c.pass}, {"known", c.known}});
  j["data"] = r.data;
  return j;
}

}  // namespace rieszlab::verify
