#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dpsim/common.hpp"

namespace dpsim::alloc
{

DPSIM_DEFINE_ERROR(LayoutError);
DPSIM_DEFINE_ERROR(Infeasible);

enum class ThrusterKind
{
  azimuth,
  lateral,  // fixed at 90 deg
  main,     // fixed at 0 deg
};

[[nodiscard]] ThrusterKind parse_thruster_kind(const std::string & s);
[[nodiscard]] std::string to_string(ThrusterKind k);

struct Thruster
{
  std::string name;
  ThrusterKind kind{ThrusterKind::azimuth};
  double lx{0.0}, ly{0.0};            // m from the centre of gravity
  double u_min{0.0}, u_max{0.0};      // kN
  double du_rate{0.0};                // kN/s
  double alpha_min{-kPi}, alpha_max{kPi};  // rad
  double dalpha_rate{0.0};            // rad/s
  double alpha_init{0.0};             // rad; the locked angle for fixed kinds

  [[nodiscard]] bool fixed_angle() const { return kind != ThrusterKind::azimuth; }
};

/// Thruster set of the vessel. lateral/main thrusters have their angle locked
/// (alpha_min = alpha_max = alpha_init).
class ThrusterLayout
{
public:
  ThrusterLayout() = default;
  explicit ThrusterLayout(std::vector<Thruster> thrusters);

  /// Shuttle tanker: bow lateral No.1, azimuths No.2 and No.3, stern main No.4.
  [[nodiscard]] static ThrusterLayout shuttle_tanker();

  /// CSV: name,kind,x,y,u_min,u_max,du_rate,alpha_min_deg,alpha_max_deg,dalpha_rate_deg,alpha_init_deg
  [[nodiscard]] static ThrusterLayout load(const std::filesystem::path & path);
  void save(const std::filesystem::path & path) const;

  [[nodiscard]] std::size_t size() const { return thrusters_.size(); }
  [[nodiscard]] const Thruster & operator[](std::size_t i) const { return thrusters_[i]; }
  [[nodiscard]] const std::vector<Thruster> & thrusters() const { return thrusters_; }

  [[nodiscard]] Eigen::VectorXd initial_angles() const;
  [[nodiscard]] Eigen::VectorXd u_min() const;
  [[nodiscard]] Eigen::VectorXd u_max() const;

  /// Upper bound of |tau| per axis: sum of u_max times the best unit
  /// projection each thruster can reach (kN, kN, kN m).
  [[nodiscard]] Vector3 capability() const;

  /// Same layout with every position divided by `length` and every thrust
  /// (rate) divided by `force` (model-scale conversion).
  [[nodiscard]] ThrusterLayout scaled(double length, double force, double time) const;

private:
  std::vector<Thruster> thrusters_;
};

/// Columns (cos a, sin a, -l_y cos a + l_x sin a).
[[nodiscard]] Eigen::Matrix<double, 3, Eigen::Dynamic> build_config_matrix(const Eigen::VectorXd & alpha,
                                                                            const ThrusterLayout & layout);

struct AllocationWeights
{
  Vector3 q{Vector3::Constant(1e4)};  // slack weight diagonal
  double omega_angle{10.0};           // angle-change weight (same for every azimuth)
  double rho{1.0};
  double epsilon{1e-3};
  int iterations{3};

  void validate() const;
};

struct AllocationProblem
{
  Vector3 tau{Vector3::Zero()};  // kN, kN, kN m
  Eigen::VectorXd u0;            // previous thrusts, kN
  Eigen::VectorXd alpha0;        // previous angles, rad
  AllocationWeights weights{};
  /// Control-step duration for the rate limits. <= 0 disables the rate
  /// limits (steady-state use) and applies an internal angle trust region.
  double step{0.5};
};

struct AllocationResult
{
  Eigen::VectorXd u;
  Eigen::VectorXd alpha;
  Vector3 s{Vector3::Zero()};         // tau - B(alpha) u
  Vector3 achieved{Vector3::Zero()};  // B(alpha) u
  double objective{0.0};
  double det{0.0};  // det(B B^T) at the returned angles
  int iterations{0};
  bool converged{false};
  std::vector<double> history;  // J at the start and after every accepted iterate
};

/// Box limits of one control step (magnitude and rate).
struct StepBounds
{
  Eigen::VectorXd u_lo, u_hi, a_lo, a_hi;
};
[[nodiscard]] StepBounds step_bounds(const AllocationProblem & problem, const ThrusterLayout & layout);

/// J(alpha, u) with s = tau - B(alpha) u.
[[nodiscard]] double allocation_objective(const Eigen::VectorXd & u, const Eigen::VectorXd & alpha,
                                          const AllocationProblem & problem, const ThrusterLayout & layout);

/// Sequential convexification of the allocation problem: |u|^1.5 replaced
/// by its value/slope-matched quadratic, B(alpha)u and the singularity
/// term linearised in alpha, one QP per iteration, iterates accepted only
/// if J does not increase. Throws Infeasible when the QP fails (a bug).
[[nodiscard]] AllocationResult allocate(const AllocationProblem & problem, const ThrusterLayout & layout);

/// Alternative slot: angles held at alpha0 and u = B^+ tau clipped to the
/// step bounds.
[[nodiscard]] AllocationResult allocate_pseudoinverse(const AllocationProblem & problem,
                                                      const ThrusterLayout & layout);

/// True when (u, alpha) satisfies every magnitude and rate limit of the step
/// (within a tiny absolute tolerance).
[[nodiscard]] bool satisfies_constraints(const AllocationResult & r, const AllocationProblem & problem,
                                         const ThrusterLayout & layout, double tol = 1e-9);

}  // namespace dpsim::alloc
