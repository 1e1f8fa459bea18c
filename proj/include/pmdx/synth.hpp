#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pmdx/subject.hpp"

namespace pmdx {

// Synthetic cohort generator. Stands in for the private clinical cohorts with
// a latent structure that gives each acquisition stage genuinely new
// information: dementia phenotype shows up in tabular data, the phenotype
// location pattern in MRI, and the "in-vivo evidence" axis mostly in PET.
struct SynthConfig {
    int n = 2000;
    std::array<double, 4> class_priors{0.25, 0.25, 0.25, 0.25};
    std::array<int, 3> volume_shape{8, 8, 8};

    // Per-modality class-signal strengths; 0 removes all class information.
    double tabular_signal = 1.0;
    double mri_signal = 1.0;
    double pet_signal = 1.0;

    double tabular_missing_rate = 0.1;
    double volume_noise = 1.0;

    // Nested availability: every subject has tabular data, frac_mri of them
    // also have MRI, frac_pet (<= frac_mri) additionally have PET.
    double frac_mri = 0.6;
    double frac_pet = 0.3;

    void validate() const;
};

std::vector<SubjectRecord> synthesize_cohort(const SynthConfig& cfg, uint64_t seed);

} // namespace pmdx
