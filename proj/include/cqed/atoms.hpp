#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cqed {

/// One atom (or one Zeeman-sublevel copy of an atom) in the cavity mode.
struct AtomSite {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  ///< [um]
  double coupling = 0.0;                               ///< g_i [rad/us]
  int label = 0;                                       ///< detuning class index
};

/// A sampled atomic-beam configuration.
///
/// Label 0 is the driven transition; higher labels (e.g. a Zeeman sublevel) are
/// extra copies of the same atoms at other detunings. `class_detunings[label]`
/// is the atom-drive detuning of each class.
struct AtomRealization {
  std::vector<AtomSite> atoms;
  std::vector<double> class_detunings{0.0};
  double cavity_detuning = 0.0;  ///< added to the cavity-drive detuning
  double g_max = 0.0;

  /// sum over label-0 atoms of (g_i / g_max)^2
  double n_eff() const {
    double s = 0.0;
    for (const auto& a : atoms)
      if (a.label == 0 && g_max > 0.0) s += (a.coupling / g_max) * (a.coupling / g_max);
    return s;
  }
  std::size_t atom_count(int label = 0) const {
    std::size_t n = 0;
    for (const auto& a : atoms) n += a.label == label ? 1 : 0;
    return n;
  }
};

}  // namespace cqed
