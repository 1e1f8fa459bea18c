#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pmdx/errors.hpp"

namespace pmdx {

// Diagnostic sub-types with stable integer codes used throughout metrics.
enum class SubType : int {
    TypicalAD = 0,
    AtypicalAD = 1,
    PreclinicalAD = 2,
    NormalControl = 3,
};

constexpr int kNumSubTypes = 4;

const char* to_string(SubType s);
SubType subtype_from_string(const std::string& s);

// 3-D volume stored as float32 (the on-disk element type).
struct Volume {
    std::array<int, 3> shape{0, 0, 0};
    std::vector<float> data;

    int voxels() const { return shape[0] * shape[1] * shape[2]; }
    bool valid() const { return static_cast<int>(data.size()) == voxels() && voxels() > 0; }
};

// Tabular fields; every field is optional, but at least one must be present
// whenever any modality is.
struct Tabular {
    std::optional<int> age;
    std::optional<int> education;
    std::optional<std::string> gender;

    std::optional<bool> heart_attack;
    std::optional<bool> hypertension;
    std::optional<bool> stroke;
    std::optional<bool> alcohol_abuse;
    std::optional<bool> psychiatric_disorder;
    std::optional<double> blood_test;

    std::optional<double> dementia_level; // CDR-style ordinal

    bool personal_present() const { return age || education || gender; }
    bool health_present() const {
        return heart_attack || hypertension || stroke || alcohol_abuse || psychiatric_disorder ||
               blood_test;
    }
    bool dementia_present() const { return dementia_level.has_value(); }
    bool any_present() const { return personal_present() || health_present() || dementia_present(); }
};

struct SubjectRecord {
    std::string id;
    Tabular tabular;
    std::optional<Volume> mri;
    std::optional<Volume> pet;
    SubType label = SubType::NormalControl;

    bool has_mri() const { return mri.has_value(); }
    bool has_pet() const { return pet.has_value(); }
    // Highest stage this subject's modalities support.
    int max_stage() const { return has_pet() ? 3 : has_mri() ? 2 : 1; }

    // pet => mri => at least one tabular field
    void validate() const {
        if (has_pet() && !has_mri())
            throw ValidationError("subject '" + id + "': pet present without mri");
        if ((has_mri() || has_pet()) && !tabular.any_present())
            throw ValidationError("subject '" + id + "': imaging present without tabular data");
        if (!tabular.any_present())
            throw ValidationError("subject '" + id + "': no tabular fields present");
    }
};

// The textualized tabular data: personal / health / dementia strings.
struct TextBundle {
    std::optional<std::string> t_p;
    std::optional<std::string> t_h;
    std::optional<std::string> t_d;
    int template_id = 3;
};

struct GuidelineCriterion {
    SubType subtype;
    std::string text;
};

} // namespace pmdx
