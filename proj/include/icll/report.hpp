#pragma once

#include "icll/eval.hpp"

namespace icll {

/// Tidy CSV assembled from eval-report JSON documents; a pure function of
/// its inputs. Figures select the grouping columns:
///   fig2: kind/variant x protocol metric table,
///   fig5: compositional-fraction sweep rows,
///   fig6: shortcut-injection pairs (train query mode x variant),
///   raw:  every row with full metadata.
std::string make_report(const std::vector<json>& eval_reports,
                        const std::string& figure);

}  // namespace icll
