#include "pmdx/folds.hpp"

#include <array>

#include "pmdx/rng.hpp"

namespace pmdx {

DatasetSplit split_folds(const std::vector<SubjectRecord>& records, uint64_t seed) {
    Rng rng(seed);
    std::array<std::vector<std::string>, kNumSubTypes> by_label;
    for (const SubjectRecord& r : records) {
        if (by_label[static_cast<size_t>(r.label)].empty())
            by_label[static_cast<size_t>(r.label)].reserve(records.size() / kNumSubTypes + 1);
        by_label[static_cast<size_t>(r.label)].push_back(r.id);
    }

    DatasetSplit split;
    int counter = 0;
    for (auto& bucket : by_label) {
        rng.shuffle(bucket);
        for (const std::string& id : bucket) {
            if (!split.fold_of.emplace(id, counter % 5).second)
                throw ValidationError("duplicate subject id '" + id + "' in fold split");
            ++counter;
        }
    }
    return split;
}

} // namespace pmdx
