#include "pmdx/guideline.hpp"

namespace pmdx {

const std::vector<GuidelineCriterion>& guideline_corpus() {
    static const std::vector<GuidelineCriterion> corpus = {
        {SubType::TypicalAD,
         "Significant episodic memory impairment and In-vivo evidence of Alzheimer's disease"},
        {SubType::AtypicalAD,
         "Posterior or logopenic or frontal of Alzheimer's disease and In-vivo evidence of "
         "Alzheimer's disease"},
        {SubType::PreclinicalAD,
         "Absence of specific clinical phenotype and In-vivo evidence of Alzheimer's disease"},
        {SubType::NormalControl,
         "Absence of specific clinical phenotype and No evidence of Alzheimer's disease"},
    };
    return corpus;
}

} // namespace pmdx
