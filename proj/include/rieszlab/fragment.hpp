#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rieszlab/geometry.hpp"

namespace rieszlab {

// Dirichlet Laplacian of an isolated end fragment, diagonalised axis by axis:
// sine modes on the lattice directions, Fourier modes on the cycles.
class FragmentOperator {
 public:
  explicit FragmentOperator(const EndSpec& spec);

  const ModelManifold& graph() const { return M_; }
  const EndSpec& spec() const { return spec_; }
  double lowest_eigenvalue() const;

  Vec solve(double k, const Vec& f) const;  // (Delta + k^2)^{-1} f
  Vec solve_squared(double k, const Vec& f) const;  // (Delta + k^2)^{-2} f
  Vec heat(double t, const Vec& f) const;
  Vec column(double k, int v) const;
  double heat_diagonal(double t, int v) const;

  // Entries (Delta + k^2)^{-1-moment}(z, z') for every k and pair, by a
  // trapezoid rule in log t over cached one-dimensional heat kernels.
  // Result is (ks.size() x pairs.size()).
  Eigen::MatrixXd entries(const std::vector<double>& ks, const std::vector<std::pair<int, int>>& pairs,
                          int moment = 0) const;
  // Same, one output row per (k, moment).
  Eigen::MatrixXd entries(const std::vector<std::pair<double, int>>& rows,
                          const std::vector<std::pair<int, int>>& pairs) const;
  // Entries of int_0^inf w(t) e^{-t Delta} dt, one output row per weight w.
  Eigen::MatrixXd entries(const std::vector<std::function<double(double)>>& weights,
                          const std::vector<std::pair<int, int>>& pairs) const;

 private:
  void forward(std::vector<double>& t) const;
  void backward(std::vector<double>& t) const;
  void apply_axis(std::vector<double>& t, int axis, const Eigen::MatrixXd& Q, bool transpose) const;
  std::vector<double> gather(const Vec& f) const;
  Vec scatter(const std::vector<double>& t) const;
  template <class F>
  Vec spectral_apply(const Vec& f, F&& weight) const;
  void build_time_tables() const;

  EndSpec spec_;
  ModelManifold M_;
  int L_ = 0;  // interior points per lattice axis
  Eigen::MatrixXd path_Q_;
  Eigen::VectorXd path_lam_;
  std::vector<Eigen::MatrixXd> cyc_Q_;
  std::vector<Eigen::VectorXd> cyc_lam_;
  std::vector<int> dims_;
  std::vector<int> tensor_to_vertex_;
  std::vector<int> vertex_to_tensor_;
  std::vector<double> lambda_sum_;  // eigenvalue of each tensor mode

  // time-quadrature caches
  mutable std::vector<double> t_nodes_, t_weights_;
  mutable std::vector<double> path_table_;               // ((a*L+b)*nu + u)
  mutable std::vector<std::vector<double>> cyc_table_;  // per cycle: (delta*nu + u)
};

}  // namespace rieszlab
