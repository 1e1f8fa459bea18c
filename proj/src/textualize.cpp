#include "pmdx/textualize.hpp"

#include <cmath>
#include <cstdio>
#include <vector>

namespace pmdx {

const char* to_string(SubType s) {
    switch (s) {
        case SubType::TypicalAD: return "TypicalAD";
        case SubType::AtypicalAD: return "AtypicalAD";
        case SubType::PreclinicalAD: return "PreclinicalAD";
        case SubType::NormalControl: return "NormalControl";
    }
    throw InputError("invalid SubType code");
}

SubType subtype_from_string(const std::string& s) {
    if (s == "TypicalAD") return SubType::TypicalAD;
    if (s == "AtypicalAD") return SubType::AtypicalAD;
    if (s == "PreclinicalAD") return SubType::PreclinicalAD;
    if (s == "NormalControl") return SubType::NormalControl;
    throw ParseError("unknown sub-type label '" + s + "'");
}

std::string template_suffix(int template_id) {
    switch (template_id) {
        case 1: return "";
        case 2: return " subject";
        case 3: return " subject for Alzheimer's Disease diagnosis";
        default:
            throw ConfigError("unknown template_id " + std::to_string(template_id) +
                              " (expected 1, 2 or 3)");
    }
}

namespace {

// "0.5" not "0.500000"; integral values render without a decimal point.
std::string fmt_num(double v) {
    if (v == std::floor(v) && std::fabs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string bool_clause(bool v, const std::string& phrase) {
    return (v ? "positive " : "negative ") + phrase;
}

std::optional<std::string> join_clauses(const std::vector<std::string>& clauses,
                                        const std::string& suffix) {
    if (clauses.empty()) return std::nullopt;
    std::string out;
    for (size_t i = 0; i < clauses.size(); ++i) {
        if (i) out += "; ";
        out += clauses[i] + suffix;
    }
    return out;
}

} // namespace

TextBundle textualize(const SubjectRecord& record, int template_id) {
    const std::string suffix = template_suffix(template_id);
    const Tabular& t = record.tabular;

    std::vector<std::string> personal;
    if (t.age) personal.push_back(std::to_string(*t.age) + " years old");
    if (t.education) personal.push_back(std::to_string(*t.education) + " years of education");
    if (t.gender) personal.push_back(*t.gender + " gender");

    std::vector<std::string> health;
    if (t.heart_attack) health.push_back(bool_clause(*t.heart_attack, "heart attack history"));
    if (t.hypertension) health.push_back(bool_clause(*t.hypertension, "hypertension history"));
    if (t.stroke) health.push_back(bool_clause(*t.stroke, "stroke history"));
    if (t.alcohol_abuse) health.push_back(bool_clause(*t.alcohol_abuse, "alcohol abuse history"));
    if (t.psychiatric_disorder)
        health.push_back(bool_clause(*t.psychiatric_disorder, "psychiatric disorder history"));
    if (t.blood_test) health.push_back(fmt_num(*t.blood_test) + " blood test result");

    std::vector<std::string> dementia;
    if (t.dementia_level) dementia.push_back("CDR " + fmt_num(*t.dementia_level) + " dementia level");

    TextBundle bundle;
    bundle.template_id = template_id;
    bundle.t_p = join_clauses(personal, suffix);
    bundle.t_h = join_clauses(health, suffix);
    bundle.t_d = join_clauses(dementia, suffix);
    return bundle;
}

} // namespace pmdx
