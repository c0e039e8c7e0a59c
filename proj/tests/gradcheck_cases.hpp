#pragma once

// Finite-difference checks of the supervision heads and the LM decoder.
// Built against the double library; the interface carries no library types
// so float-build binaries can call it too.

#include <string>
#include <vector>

namespace gradcheck {

struct CaseSummary {
  std::string name;
  int instances = 0;
  int checked = 0;
  double max_rel_error = 0;
};

/// Runs `instances` random instances each of the ASR loss, the CLAP loss and
/// the hierarchical LM objective at small width.
std::vector<CaseSummary> run_model_cases(int instances);

}  // namespace gradcheck
