#pragma once

#include <string>
#include <vector>

#include "pmdx/subject.hpp"

namespace pmdx {

// JSON-Lines cohort file, one subject per line:
//   {"id": "...", "label": "TypicalAD", "tabular": {...},
//    "mri": [[[...]]] | "mri_path": "volumes/x.raw", ...}
// Raw volume files are little-endian float32 with a JSON sidecar
// "<file>.json" holding {"shape": [d,h,w], "dtype": "f32le"}.

std::vector<SubjectRecord> load_cohort(const std::string& path);

// Writes dir/cohort.jsonl (plus dir/volumes/*.raw unless inline_volumes).
// Returns the path of the written jsonl file.
std::string save_cohort(const std::vector<SubjectRecord>& records, const std::string& dir,
                        bool inline_volumes = false);

Volume load_raw_volume(const std::string& raw_path);
void save_raw_volume(const Volume& v, const std::string& raw_path);

} // namespace pmdx
