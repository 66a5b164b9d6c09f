#pragma once

// Periodic cell problems x = Fbar X + u(X) with periodic u, and the effective
// strain, stress and energy of their equilibria.

#include <string>
#include <vector>

#include "sgdyn/assembly.hpp"

namespace sgdyn {

struct MacroLoading {
  Mat3 D = reference_direction();
  std::vector<double> eta_values;
  double increment = 0.1;  // largest continuation step in eta

  // The fixed loading direction of the reference study.
  static Mat3 reference_direction();
  // 26 values evenly spaced in [-1.5, 1].
  static std::vector<double> reference_eta_values();
  void validate() const;  // throws InvalidParameter
};

// Ebar = 1/2 (Fbar^T Fbar - I).
Mat3 effective_strain(const Mat3& Fbar);

struct EffectiveStress {
  Mat3 P_volume = Mat3::Zero();    // int P dV
  Mat3 P_traction = Mat3::Zero();  // boundary-layer residual moments
  Mat3 S = Mat3::Zero();           // Fbar^{-1} P_volume
  Mat3 B_average[3];               // int B_iJK dV as [K](i, J), diagnostic only
  double psi_bar = 0.0;
};

struct EffectiveRecord {
  double eta = 0.0;
  Mat3 Fbar, Ebar, Sbar, Pbar, Pbar_traction;
  double psi_bar = 0.0;
  int newton_iters = 0;
  double residual_norm = 0.0;
  double symmetry_error = 0.0;  // ||S - S^T|| / max(1, ||S||)
  double route_error = 0.0;     // ||P_vol - P_trac|| / max(1, ||P_vol||)
};

struct EffectiveResponse {
  Mat3 D;
  std::vector<EffectiveRecord> records;  // sorted by eta, converged values only
  std::vector<std::string> failures;
};

class PeriodicCell {
 public:
  // `space` must be periodic; the rigid translation is removed by pinning
  // control point 0.
  PeriodicCell(const SplineSpace& space, const EnergyModel& energy, int threads = 0);

  const SplineSpace& space() const { return space_; }
  // Static equilibrium under Fbar starting from u_start (shifted so that the
  // pinned control point is zero).
  FieldCoeffs equilibrium(const Mat3& Fbar, const FieldCoeffs& u_start, const NewtonConfig& cfg,
                          NewtonResult* info = nullptr);
  double residual_norm(const Mat3& Fbar, const FieldCoeffs& u);
  EffectiveStress effective_stress(const FieldCoeffs& u, const Mat3& Fbar);

 private:
  SplineSpace space_;
  SplineSpace open_;
  EnergyModel energy_;
  Assembler cell_;
  Assembler open_cell_;
  std::unique_ptr<PointKernel> kernel_;
  std::vector<int> boundary_layer_;  // open-space control points touching a face
  LinearSolver solver_;
};

FieldCoeffs periodic_equilibrium(const SplineSpace& space, const Mat3& Fbar, const FieldCoeffs& u_start,
                                 const EnergyModel& energy, const NewtonConfig& cfg, NewtonResult* info = nullptr);

// Solves every eta warm-started from its neighbour, starting at eta = 0 from
// `seed` and walking up and down with steps no larger than the increment.
// A failed solve stops that direction; earlier records are kept.
EffectiveResponse continuation_sweep(const SplineSpace& space, const MacroLoading& loading,
                                     const EnergyModel& energy, const FieldCoeffs& seed, const NewtonConfig& cfg,
                                     std::vector<FieldCoeffs>* fields = nullptr);

}  // namespace sgdyn
