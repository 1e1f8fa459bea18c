#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pmdx/subject.hpp"

namespace pmdx {

enum class FoldRole { Train, Validation, Test };

// 5-fold assignment; folds 0-2 train, fold 3 validation, fold 4 test.
struct DatasetSplit {
    std::map<std::string, int> fold_of;

    static FoldRole role_of_fold(int fold) {
        if (fold < 0 || fold > 4) throw InputError("fold index out of range");
        return fold <= 2 ? FoldRole::Train : fold == 3 ? FoldRole::Validation : FoldRole::Test;
    }

    FoldRole role(const std::string& id) const {
        auto it = fold_of.find(id);
        if (it == fold_of.end()) throw InputError("subject '" + id + "' not in split");
        return role_of_fold(it->second);
    }

    std::vector<int> indices_with_role(const std::vector<SubjectRecord>& records,
                                       FoldRole want) const {
        std::vector<int> out;
        for (size_t i = 0; i < records.size(); ++i)
            if (role(records[i].id) == want) out.push_back(static_cast<int>(i));
        return out;
    }
};

// Label-stratified shuffle into 5 folds; deterministic in (records order, seed).
DatasetSplit split_folds(const std::vector<SubjectRecord>& records, uint64_t seed);

} // namespace pmdx
