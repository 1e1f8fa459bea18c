#pragma once

#include <vector>

#include "pmdx/subject.hpp"

namespace pmdx {

// The four IWG-2 style sub-type criterion texts, in SubType code order.
// These strings are what the guideline alignment head is contrasted against.
const std::vector<GuidelineCriterion>& guideline_corpus();

} // namespace pmdx
