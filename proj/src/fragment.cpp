#include "rieszlab/fragment.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rieszlab {

namespace {

constexpr double pi = std::numbers::pi;

// orthonormal real Fourier basis of a cycle, columns are modes
void cycle_basis(int m, Eigen::MatrixXd& Q, Eigen::VectorXd& lam) {
  Q.resize(m, m);
  lam.resize(m);
  int col = 0;
  auto put = [&](int j, bool sine) {
    double nrm = 0;
    for (int y = 0; y < m; ++y) {
      const double a = 2 * pi * j * y / m;
      Q(y, col) = sine ? std::sin(a) : std::cos(a);
      nrm += Q(y, col) * Q(y, col);
    }
    Q.col(col) /= std::sqrt(nrm);
    lam[col] = m == 2 && j == 1 ? 2.0 : 2 - 2 * std::cos(2 * pi * j / m);
    ++col;
  };
  put(0, false);
  for (int j = 1; 2 * j < m; ++j) {
    put(j, false);
    put(j, true);
  }
  if (m % 2 == 0 && m > 1) put(m / 2, false);
  // a 2-cycle has a single edge, so its nonzero eigenvalue is 2
  if (m == 2) lam[1] = 2.0;
}

}  // namespace

FragmentOperator::FragmentOperator(const EndSpec& spec) : spec_(spec), M_(build_end(spec)) {
  const int R = spec.R;
  const double ih2 = 1.0 / (spec.h * spec.h);
  L_ = 2 * R - 1;
  path_Q_.resize(L_, L_);
  path_lam_.resize(L_);
  for (int j = 1; j <= L_; ++j) {
    path_lam_[j - 1] = (2 - 2 * std::cos(j * pi / (2 * R))) * ih2;
    for (int a = 0; a < L_; ++a) path_Q_(a, j - 1) = std::sqrt(1.0 / R) * std::sin(j * pi * (a + 1) / (2.0 * R));
  }
  for (int m : spec.factor) {
    Eigen::MatrixXd Q;
    Eigen::VectorXd lam;
    cycle_basis(m, Q, lam);
    cyc_Q_.push_back(Q);
    cyc_lam_.push_back(lam * ih2);
  }
  dims_.assign(spec.n, L_);
  for (int m : spec.factor) dims_.push_back(m);
  int64_t T = 1;
  for (int d : dims_) T *= d;
  tensor_to_vertex_.resize(T);
  vertex_to_tensor_.assign(M_.num_vertices, -1);
  lambda_sum_.resize(T);
  const int nd = int(dims_.size());
  std::vector<int> idx(nd, 0);
  std::vector<int> x(spec.n), y(spec.factor.size());
  for (int64_t t = 0; t < T; ++t) {
    for (int d = 0; d < spec.n; ++d) x[d] = idx[d] + 1 - R;
    for (size_t c = 0; c < spec.factor.size(); ++c) y[c] = idx[spec.n + c];
    const int v = vertex_at(M_, 1, x, y);
    tensor_to_vertex_[t] = v;
    vertex_to_tensor_[v] = int(t);
    double s = 0;
    for (int d = 0; d < spec.n; ++d) s += path_lam_[idx[d]];
    for (size_t c = 0; c < spec.factor.size(); ++c) s += cyc_lam_[c][idx[spec.n + c]];
    lambda_sum_[t] = s;
    for (int d = nd - 1; d >= 0; --d) {
      if (++idx[d] < dims_[d]) break;
      idx[d] = 0;
    }
  }
}

double FragmentOperator::lowest_eigenvalue() const { return spec_.n * path_lam_[0]; }

void FragmentOperator::apply_axis(std::vector<double>& t, int axis, const Eigen::MatrixXd& Q, bool transpose) const {
  int64_t pre = 1, post = 1;
  for (int d = 0; d < axis; ++d) pre *= dims_[d];
  for (size_t d = axis + 1; d < dims_.size(); ++d) post *= dims_[d];
  const int n = dims_[axis];
  if (n == 1) return;
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMat tmp(n, post);
  for (int64_t p = 0; p < pre; ++p) {
    Eigen::Map<RowMat> X(t.data() + p * n * post, n, post);
    if (transpose) tmp.noalias() = Q.transpose() * X;
    else tmp.noalias() = Q * X;
    X = tmp;
  }
}

void FragmentOperator::forward(std::vector<double>& t) const {
  for (int d = 0; d < spec_.n; ++d) apply_axis(t, d, path_Q_, true);
  for (size_t c = 0; c < cyc_Q_.size(); ++c) apply_axis(t, spec_.n + int(c), cyc_Q_[c], true);
}

void FragmentOperator::backward(std::vector<double>& t) const {
  for (int d = 0; d < spec_.n; ++d) apply_axis(t, d, path_Q_, false);
  for (size_t c = 0; c < cyc_Q_.size(); ++c) apply_axis(t, spec_.n + int(c), cyc_Q_[c], false);
}

std::vector<double> FragmentOperator::gather(const Vec& f) const {
  std::vector<double> t(tensor_to_vertex_.size());
  for (size_t i = 0; i < t.size(); ++i) t[i] = f[tensor_to_vertex_[i]];
  return t;
}

Vec FragmentOperator::scatter(const std::vector<double>& t) const {
  Vec f = Vec::Zero(M_.num_vertices);
  for (size_t i = 0; i < t.size(); ++i) f[tensor_to_vertex_[i]] = t[i];
  return f;
}

template <class F>
Vec FragmentOperator::spectral_apply(const Vec& f, F&& weight) const {
  auto t = gather(f);
  forward(t);
  for (size_t i = 0; i < t.size(); ++i) t[i] *= weight(lambda_sum_[i]);
  backward(t);
  return scatter(t);
}

Vec FragmentOperator::solve(double k, const Vec& f) const {
  return spectral_apply(f, [k](double l) { return 1.0 / (l + k * k); });
}

Vec FragmentOperator::solve_squared(double k, const Vec& f) const {
  return spectral_apply(f, [k](double l) { return 1.0 / ((l + k * k) * (l + k * k)); });
}

Vec FragmentOperator::heat(double t, const Vec& f) const {
  if (t < 0) throw std::invalid_argument("heat: t < 0");
  return spectral_apply(f, [t](double l) { return std::exp(-t * l); });
}

Vec FragmentOperator::column(double k, int v) const {
  Vec e = Vec::Zero(M_.num_vertices);
  e[v] = 1.0;
  return solve(k, e);
}

double FragmentOperator::heat_diagonal(double t, int v) const {
  const int ti = vertex_to_tensor_[v];
  if (ti < 0) return 0.0;
  double p = 1.0;
  const int32_t* x = M_.coord(v);
  for (int d = 0; d < spec_.n; ++d) {
    const int a = x[d] + spec_.R - 1;
    double s = 0;
    for (int j = 0; j < L_; ++j) s += std::exp(-t * path_lam_[j]) * path_Q_(a, j) * path_Q_(a, j);
    p *= s;
  }
  for (size_t c = 0; c < cyc_Q_.size(); ++c) {
    double s = 0;
    for (int j = 0; j < cyc_lam_[c].size(); ++j) s += std::exp(-t * cyc_lam_[c][j]);
    p *= s / spec_.factor[c];
  }
  return p;
}

void FragmentOperator::build_time_tables() const {
  if (!t_nodes_.empty()) return;
  const double step = 0.2;
  const double umin = std::log(1e-12 * spec_.h * spec_.h);
  const double umax = std::log(60.0 / lowest_eigenvalue());
  for (double u = umin; u <= umax + step; u += step) {
    t_nodes_.push_back(std::exp(u));
    t_weights_.push_back(step * std::exp(u));
  }
  const int nu = int(t_nodes_.size());
  path_table_.assign(size_t(L_) * L_ * nu, 0.0);
  Eigen::MatrixXd P(L_, L_);
  for (int u = 0; u < nu; ++u) {
    Eigen::VectorXd e = (-t_nodes_[u] * path_lam_.array()).exp();
    P.noalias() = path_Q_ * e.asDiagonal() * path_Q_.transpose();
    for (int a = 0; a < L_; ++a)
      for (int b = 0; b < L_; ++b) path_table_[(size_t(a) * L_ + b) * nu + u] = P(a, b);
  }
  cyc_table_.clear();
  for (size_t c = 0; c < cyc_Q_.size(); ++c) {
    const int m = spec_.factor[c];
    std::vector<double> tab(size_t(m) * nu);
    for (int u = 0; u < nu; ++u) {
      Eigen::VectorXd e = (-t_nodes_[u] * cyc_lam_[c].array()).exp();
      Eigen::VectorXd row = cyc_Q_[c] * e.asDiagonal() * cyc_Q_[c].row(0).transpose();
      for (int dlt = 0; dlt < m; ++dlt) tab[size_t(dlt) * nu + u] = row[dlt];
    }
    cyc_table_.push_back(std::move(tab));
  }
}

Eigen::MatrixXd FragmentOperator::entries(const std::vector<double>& ks, const std::vector<std::pair<int, int>>& pairs,
                                          int moment) const {
  std::vector<std::pair<double, int>> rows;
  for (double k : ks) rows.push_back({k, moment});
  return entries(rows, pairs);
}

Eigen::MatrixXd FragmentOperator::entries(const std::vector<std::pair<double, int>>& rows,
                                          const std::vector<std::pair<int, int>>& pairs) const {
  std::vector<std::function<double(double)>> w;
  for (auto [k, m] : rows) w.push_back([k, m](double t) { return std::exp(-t * k * k) * std::pow(t, m); });
  return entries(w, pairs);
}

Eigen::MatrixXd FragmentOperator::entries(const std::vector<std::function<double(double)>>& weights,
                                          const std::vector<std::pair<int, int>>& pairs) const {
  build_time_tables();
  const int nu = int(t_nodes_.size());
  const int nk = int(weights.size());
  Eigen::MatrixXd Wk(nk, nu);
  for (int a = 0; a < nk; ++a)
    for (int u = 0; u < nu; ++u) Wk(a, u) = t_weights_[u] * weights[a](t_nodes_[u]);
  Eigen::MatrixXd out(nk, pairs.size());
  Eigen::VectorXd prod(nu);
  const int nc = int(spec_.factor.size());
  for (size_t p = 0; p < pairs.size(); ++p) {
    const auto [z, zp] = pairs[p];
    if (M_.boundary[z] || M_.boundary[zp]) {
      out.col(p).setZero();
      continue;
    }
    const int32_t* x = M_.coord(z);
    const int32_t* y = M_.coord(zp);
    prod.setOnes();
    for (int d = 0; d < spec_.n; ++d) {
      const double* row = path_table_.data() + (size_t(x[d] + spec_.R - 1) * L_ + (y[d] + spec_.R - 1)) * nu;
      prod.array() *= Eigen::Map<const Eigen::ArrayXd>(row, nu);
    }
    for (int c = 0; c < nc; ++c) {
      const int m = spec_.factor[c];
      const int dlt = ((x[spec_.n + c] - y[spec_.n + c]) % m + m) % m;
      prod.array() *= Eigen::Map<const Eigen::ArrayXd>(cyc_table_[c].data() + size_t(dlt) * nu, nu);
    }
    out.col(p).noalias() = Wk * prod;
  }
  return out;
}

}  // namespace rieszlab
