#include "cpch/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpch/error.hpp"

namespace cpch {

std::vector<double> g_prime(const ChModel& model, std::span<const double> f) {
  std::vector<double> out(f.size());
  std::transform(f.begin(), f.end(), out.begin(), [&](double v) { return model.g_prime(v); });
  return out;
}

BdfScheme BdfScheme::of_order(int order) {
  if (order == 1) return bdf1();
  if (order == 2) return bdf2();
  throw Error(ErrorCode::kInvalidArgument, "BDF order must be 1 or 2");
}

double mass(std::span<const double> f, double area) {
  if (f.empty()) return 0.0;
  return std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size()) * area;
}

double energy(std::span<const double> f, const ChModel& model, const SparseOperator& extended, double area) {
  if (f.empty()) return 0.0;
  const std::vector<double> lf = extended * f;
  const double half_cn2 = 0.5 * model.cn * model.cn;
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += model.g(f[i]) - half_cn2 * f[i] * lf[i];
  return sum / static_cast<double>(f.size()) * area;
}

ChState make_initial_state(std::vector<double> f0, const ChModel& model, const SparseOperator& extended,
                           double area) {
  if (f0.size() != extended.rows())
    throw Error(ErrorCode::kDimensionMismatch, "initial field does not match the band size");
  ChState state;
  state.mu = extended * f0;
  const double cn2 = model.cn * model.cn;
  for (std::size_t i = 0; i < f0.size(); ++i) state.mu[i] = model.g_prime(f0[i]) - cn2 * state.mu[i];
  state.mass0 = mass(f0, area);
  state.f_prev = f0;
  state.f_now = std::move(f0);
  return state;
}

double conservation_correct(ChState& state, double area) {
  const double shift = (state.mass0 - mass(state.f_now, area)) / area;
  if (shift != 0.0) {
    for (double& v : state.f_now) v += shift;
  }
  return shift;
}

StepReport bdf_step(ChState& state, const BdfScheme& scheme, const ChModel& model, const BlockSystem& sys,
                    const SchurPreconditioner& precond, double dt, const SolveOptions& options, bool conserve,
                    double area) {
  const std::size_t n = sys.n();
  if (state.f_now.size() != n || state.f_prev.size() != n || state.mu.size() != n)
    throw Error(ErrorCode::kDimensionMismatch, "state does not match the block system");
  if (sys.dt != dt || sys.beta0 != scheme.beta0)
    throw Error(ErrorCode::kInvalidArgument, "block system was built for a different dt or scheme");

  std::vector<double> rhs(2 * n);
  const double c1 = -scheme.beta1 / scheme.beta0;
  const double c2 = -scheme.beta2 / scheme.beta0;
  for (std::size_t i = 0; i < n; ++i) {
    rhs[i] = model.g_prime(scheme.extrapolate(state.f_now[i], state.f_prev[i]));
    rhs[n + i] = c1 * state.f_now[i] + c2 * state.f_prev[i];
  }
  // warm start from the current (mu, f)
  std::vector<double> x(2 * n);
  std::copy(state.mu.begin(), state.mu.end(), x.begin());
  std::copy(state.f_now.begin(), state.f_now.end(), x.begin() + static_cast<std::ptrdiff_t>(n));

  const SolveResult solve = fgmres_solve(sys, precond, rhs, x, options);

  double max_abs = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kDiverged, "non-finite value in the solution");
    max_abs = std::max(max_abs, std::abs(v));
  }
  state.f_prev.swap(state.f_now);
  state.mu.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n));
  state.f_now.assign(x.begin() + static_cast<std::ptrdiff_t>(n), x.end());
  const double f_max = std::abs(*std::max_element(state.f_now.begin(), state.f_now.end(),
                                                  [](double a, double b) { return std::abs(a) < std::abs(b); }));
  if (f_max > kDivergenceBound) throw Error(ErrorCode::kDiverged, "phase field exceeded the divergence bound");

  StepReport report;
  report.iterations = solve.iterations;
  report.residual = solve.relative_residual;
  report.order_used = scheme.order;
  if (conserve) report.correction = conservation_correct(state, area);
  state.t += dt;
  ++state.step_index;
  return report;
}

ChStepper::ChStepper(const SparseOperator& extended, double area, const ChModel& model,
                     const StepperOptions& options)
    : extended_(&extended), area_(area), model_(model), options_(options) {
  if (options.order != 1 && options.order != 2) throw Error(ErrorCode::kInvalidArgument, "BDF order must be 1 or 2");
  if (!(options.dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "time step must be positive");
  if (options.dt > options.dt_max * (1.0 + 1e-12))
    throw Error(ErrorCode::kInvalidArgument, "time step exceeds dt_max");
}

ChStepper::Entry& ChStepper::entry_for(const BdfScheme& scheme) {
  auto it = precond_.find(scheme.order);
  if (it == precond_.end()) {
    // the BDF1 bootstrap factorization is dead once BDF2 takes over
    precond_.clear();
    ++factorizations_;
    Entry entry;
    entry.system = make_block_system(*extended_, model_.cn, model_.pe, options_.dt, scheme.beta0);
    entry.precond = std::make_unique<SchurPreconditioner>(entry.system, options_.dt_max, options_.schur_method);
    it = precond_.emplace(scheme.order, std::move(entry)).first;
  }
  return it->second;
}

StepReport ChStepper::step(ChState& state) {
  const int order = (options_.order == 2 && state.step_index == 0) ? 1 : options_.order;
  const BdfScheme scheme = BdfScheme::of_order(order);
  Entry& entry = entry_for(scheme);
  return bdf_step(state, scheme, model_, entry.system, *entry.precond, options_.dt, options_.solve,
                  options_.conserve, area_);
}

}  // namespace cpch
