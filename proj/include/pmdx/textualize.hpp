#pragma once

#include "pmdx/subject.hpp"

namespace pmdx {

// Renders the tabular fields of a record into the three text components.
// Each present field becomes one clause "<value phrase> + <template suffix>";
// clauses within a component are joined by "; ". A component is absent iff
// all of its source fields are absent.
//
// Template 1: "{75 years old}"
// Template 2: "{75 years old} subject"
// Template 3: "{75 years old} subject for Alzheimer's Disease diagnosis"
TextBundle textualize(const SubjectRecord& record, int template_id);

// Suffix appended to every clause for the given template.
std::string template_suffix(int template_id);

} // namespace pmdx
