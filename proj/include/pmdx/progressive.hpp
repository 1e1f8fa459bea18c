#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pmdx/config.hpp"
#include "pmdx/model.hpp"
#include "pmdx/subject.hpp"

namespace pmdx {

// Gap between the two largest probabilities; 0 when the top two tie, 1 for a
// one-hot distribution.
double confidence(const std::array<double, 4>& probs);

// Eq-5 stage loss at value level: the contrastive loss once the confidence
// gate opens (or at the forced final stage), otherwise -C * delta^k.
double stage_loss(double conf, double l_con, int stage, const PolicyConfig& cfg);

struct StageDecision {
    int stage = 0;
    std::array<double, 4> probs{};
    double confidence = 0.0;
    bool decided = false;
    std::optional<SubType> predicted; // present iff decided
};

// Runs stages 1..3, stopping at the first stage whose confidence clears the
// threshold; the subject's last available stage always decides. Every visited
// stage is recorded. force_final (the no-progressive ablation) defers every
// decision to the last stage.
std::vector<StageDecision> run_progressive_inference(const SubjectRecord& rec, const Model& model,
                                                     const PolicyConfig& cfg, int template_id,
                                                     bool force_final = false);

// Same policy applied to precomputed per-stage scores (used by the threshold
// sweep so the model is evaluated once).
std::vector<StageDecision> apply_policy(const std::vector<StageScore>& scores,
                                        const PolicyConfig& cfg, bool force_final = false);

std::string trajectory_to_json(const std::string& subject_id,
                               const std::vector<StageDecision>& trajectory);

} // namespace pmdx
