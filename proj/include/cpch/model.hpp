#pragma once

#include <map>
#include <memory>
#include <span>
#include <vector>

#include "cpch/linear_solver.hpp"
#include "cpch/operators.hpp"

namespace cpch {

/// Double-well mixing energy.
///   kStandard: g(f) = f^4/4 - f^2/2
///   kScaled:   g(f) = f^4/40 - f^2/20
enum class Potential { kStandard, kScaled };

struct ChModel {
  double cn = 0.1;  // Cahn number
  double pe = 1.0;  // surface Peclet number
  Potential potential = Potential::kStandard;

  double g(double f) const {
    const double v = 0.25 * f * f * f * f - 0.5 * f * f;
    return potential == Potential::kScaled ? 0.1 * v : v;
  }
  double g_prime(double f) const {
    const double v = f * f * f - f;
    return potential == Potential::kScaled ? 0.1 * v : v;
  }
};

std::vector<double> g_prime(const ChModel& model, std::span<const double> f);

/// sum_k beta_k f^{n+1-k} approximates dt * beta0-weighted df/dt.
struct BdfScheme {
  int order = 1;
  double beta0 = 1.0;
  double beta1 = -1.0;
  double beta2 = 0.0;

  static BdfScheme bdf1() { return {1, 1.0, -1.0, 0.0}; }
  static BdfScheme bdf2() { return {2, 1.5, -2.0, 0.5}; }
  static BdfScheme of_order(int order);

  /// Extrapolated state at t^{n+1} used in the nonlinear term.
  double extrapolate(double f_now, double f_prev) const { return order == 1 ? f_now : 2.0 * f_now - f_prev; }
};

struct ChState {
  std::vector<double> f_now;
  std::vector<double> f_prev;
  std::vector<double> mu;
  double t = 0.0;
  int step_index = 0;
  double mass0 = 0.0;
};

/// Surrogate surface integral: band average times surface area.
double mass(std::span<const double> f, double area);
/// Band-averaged free energy times area, with the gradient term written as
/// -(Cn^2/2) f L_E f.
double energy(std::span<const double> f, const ChModel& model, const SparseOperator& extended, double area);

/// Fresh state at t = 0 with f_prev = f_now and mu = g'(f) - Cn^2 L_E f.
ChState make_initial_state(std::vector<double> f0, const ChModel& model, const SparseOperator& extended,
                           double area);

/// Shifts f_now by a constant so its surrogate mass equals state.mass0.
/// Returns the shift that was applied.
double conservation_correct(ChState& state, double area);

/// Threshold on ||f||_inf above which a run is considered diverged.
inline constexpr double kDivergenceBound = 1e3;

struct StepReport {
  int iterations = 0;
  double residual = 0.0;
  double correction = 0.0;
  int order_used = 1;
};

/// One step of the block system with an explicit scheme, solver and
/// preconditioner (no bootstrap logic). `sys` must carry `dt` and the
/// scheme's beta0. Advances t and rotates the history; optionally corrects
/// the mass afterwards.
StepReport bdf_step(ChState& state, const BdfScheme& scheme, const ChModel& model, const BlockSystem& sys,
                    const SchurPreconditioner& precond, double dt, const SolveOptions& options,
                    bool conserve = true, double area = 1.0);

struct StepperOptions {
  int order = 2;
  double dt = 1e-3;
  double dt_max = kDefaultDtMax;
  SolveOptions solve;
  bool conserve = true;
  SchurMethod schur_method = SchurMethod::kComplexSplit;
};

/// Owns the block systems and Schur factorizations of a run. The first step
/// of a second-order run uses BDF1; one factorization is kept per distinct
/// beta0.
class ChStepper {
 public:
  ChStepper(const SparseOperator& extended, double area, const ChModel& model, const StepperOptions& options);

  StepReport step(ChState& state);
  const ChModel& model() const { return model_; }
  const StepperOptions& options() const { return options_; }
  /// Number of Schur factorizations built so far (one per distinct beta0).
  std::size_t factorizations() const { return factorizations_; }

 private:
  struct Entry {
    BlockSystem system;
    std::unique_ptr<SchurPreconditioner> precond;
  };
  Entry& entry_for(const BdfScheme& scheme);

  const SparseOperator* extended_;
  double area_;
  ChModel model_;
  StepperOptions options_;
  std::map<int, Entry> precond_;
  std::size_t factorizations_ = 0;
};

}  // namespace cpch
