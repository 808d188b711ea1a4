#pragma once

#include <string>
#include <vector>

// Finite-difference verification of every differentiable operation plus the
// full encode -> message-pass -> decode -> loss composition on a two-person
// toy scene.

namespace posecast {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

struct GradCheckSuite {
  std::vector<GradCheckEntry> entries;
  double worst = 0.0;
  bool all_pass = true;
};

// inject_bug deliberately breaks one adjoint so the harness itself can be
// shown to catch a wrong gradient.
GradCheckSuite run_gradcheck_suite(double tolerance = 1e-4, bool inject_bug = false);

}  // namespace posecast
