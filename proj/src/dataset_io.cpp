#include "pmdx/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pmdx {

namespace {

static_assert(sizeof(float) == 4, "float must be 32-bit");

json tabular_to_json(const Tabular& t) {
    json j = json::object();
    if (t.age) j["age"] = *t.age;
    if (t.education) j["education"] = *t.education;
    if (t.gender) j["gender"] = *t.gender;
    if (t.heart_attack) j["heart_attack"] = *t.heart_attack;
    if (t.hypertension) j["hypertension"] = *t.hypertension;
    if (t.stroke) j["stroke"] = *t.stroke;
    if (t.alcohol_abuse) j["alcohol_abuse"] = *t.alcohol_abuse;
    if (t.psychiatric_disorder) j["psychiatric_disorder"] = *t.psychiatric_disorder;
    if (t.blood_test) j["blood_test"] = *t.blood_test;
    if (t.dementia_level) j["dementia_level"] = *t.dementia_level;
    return j;
}

Tabular tabular_from_json(const json& j) {
    Tabular t;
    if (j.contains("age")) t.age = j.at("age").get<int>();
    if (j.contains("education")) t.education = j.at("education").get<int>();
    if (j.contains("gender")) t.gender = j.at("gender").get<std::string>();
    if (j.contains("heart_attack")) t.heart_attack = j.at("heart_attack").get<bool>();
    if (j.contains("hypertension")) t.hypertension = j.at("hypertension").get<bool>();
    if (j.contains("stroke")) t.stroke = j.at("stroke").get<bool>();
    if (j.contains("alcohol_abuse")) t.alcohol_abuse = j.at("alcohol_abuse").get<bool>();
    if (j.contains("psychiatric_disorder"))
        t.psychiatric_disorder = j.at("psychiatric_disorder").get<bool>();
    if (j.contains("blood_test")) t.blood_test = j.at("blood_test").get<double>();
    if (j.contains("dementia_level")) t.dementia_level = j.at("dementia_level").get<double>();
    return t;
}

json volume_to_json(const Volume& v) {
    json zs = json::array();
    int i = 0;
    for (int z = 0; z < v.shape[0]; ++z) {
        json ys = json::array();
        for (int y = 0; y < v.shape[1]; ++y) {
            json xs = json::array();
            for (int x = 0; x < v.shape[2]; ++x) xs.push_back(v.data[static_cast<size_t>(i++)]);
            ys.push_back(std::move(xs));
        }
        zs.push_back(std::move(ys));
    }
    return zs;
}

Volume volume_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty() || !j[0][0].is_array())
        throw ParseError("inline volume must be a 3-level nested array");
    Volume v;
    v.shape = {static_cast<int>(j.size()), static_cast<int>(j[0].size()),
               static_cast<int>(j[0][0].size())};
    v.data.reserve(static_cast<size_t>(v.voxels()));
    for (const auto& ys : j) {
        if (static_cast<int>(ys.size()) != v.shape[1]) throw ParseError("ragged inline volume");
        for (const auto& xs : ys) {
            if (static_cast<int>(xs.size()) != v.shape[2]) throw ParseError("ragged inline volume");
            for (const auto& x : xs) v.data.push_back(x.get<float>());
        }
    }
    return v;
}

} // namespace

Volume load_raw_volume(const std::string& raw_path) {
    const std::string sidecar = raw_path + ".json";
    std::ifstream sf(sidecar);
    if (!sf) throw InputError("missing volume sidecar '" + sidecar + "'");
    json meta;
    try {
        sf >> meta;
    } catch (const json::exception& e) {
        throw ParseError("sidecar '" + sidecar + "': " + e.what());
    }
    if (meta.value("dtype", "") != "f32le")
        throw ValidationError("sidecar '" + sidecar + "': dtype must be \"f32le\"");
    const auto shape = meta.at("shape");
    if (!shape.is_array() || shape.size() != 3)
        throw ValidationError("sidecar '" + sidecar + "': shape must have 3 dims");

    Volume v;
    v.shape = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    std::ifstream rf(raw_path, std::ios::binary);
    if (!rf) throw InputError("cannot open volume file '" + raw_path + "'");
    v.data.resize(static_cast<size_t>(v.voxels()));
    rf.read(reinterpret_cast<char*>(v.data.data()), static_cast<std::streamsize>(v.data.size() * 4));
    if (rf.gcount() != static_cast<std::streamsize>(v.data.size() * 4))
        throw IntegrityError("volume file '" + raw_path + "' shorter than its declared shape");
    return v;
}

void save_raw_volume(const Volume& v, const std::string& raw_path) {
    std::ofstream rf(raw_path, std::ios::binary);
    if (!rf) throw InputError("cannot write volume file '" + raw_path + "'");
    rf.write(reinterpret_cast<const char*>(v.data.data()),
             static_cast<std::streamsize>(v.data.size() * 4));
    json meta;
    meta["shape"] = {v.shape[0], v.shape[1], v.shape[2]};
    meta["dtype"] = "f32le";
    std::ofstream sf(raw_path + ".json");
    sf << meta.dump() << "\n";
}

std::vector<SubjectRecord> load_cohort(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open cohort file '" + path + "'");
    const fs::path base = fs::path(path).parent_path();

    std::vector<SubjectRecord> records;
    std::set<std::string> seen;
    std::array<int, 3> ref_shape{0, 0, 0};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        SubjectRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.label = subtype_from_string(j.at("label").get<std::string>());
            if (j.contains("tabular")) rec.tabular = tabular_from_json(j.at("tabular"));
            if (j.contains("mri"))
                rec.mri = volume_from_json(j.at("mri"));
            else if (j.contains("mri_path"))
                rec.mri = load_raw_volume((base / j.at("mri_path").get<std::string>()).string());
            if (j.contains("pet"))
                rec.pet = volume_from_json(j.at("pet"));
            else if (j.contains("pet_path"))
                rec.pet = load_raw_volume((base / j.at("pet_path").get<std::string>()).string());
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.insert(rec.id).second)
            throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate subject id '" +
                                  rec.id + "'");
        rec.validate();
        for (const auto& vol : {rec.mri, rec.pet}) {
            if (!vol) continue;
            if (ref_shape[0] == 0)
                ref_shape = vol->shape;
            else if (vol->shape != ref_shape)
                throw ValidationError(path + ":" + std::to_string(line_no) +
                                      ": volume shape differs from the rest of the cohort");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::string save_cohort(const std::vector<SubjectRecord>& records, const std::string& dir,
                        bool inline_volumes) {
    fs::create_directories(dir);
    if (!inline_volumes) fs::create_directories(fs::path(dir) / "volumes");
    const std::string jsonl = (fs::path(dir) / "cohort.jsonl").string();
    std::ofstream out(jsonl);
    if (!out) throw InputError("cannot write cohort file '" + jsonl + "'");

    for (const SubjectRecord& rec : records) {
        json j;
        j["id"] = rec.id;
        j["label"] = to_string(rec.label);
        j["tabular"] = tabular_to_json(rec.tabular);
        if (rec.mri) {
            if (inline_volumes) {
                j["mri"] = volume_to_json(*rec.mri);
            } else {
                const std::string rel = "volumes/" + rec.id + "_mri.raw";
                save_raw_volume(*rec.mri, (fs::path(dir) / rel).string());
                j["mri_path"] = rel;
            }
        }
        if (rec.pet) {
            if (inline_volumes) {
                j["pet"] = volume_to_json(*rec.pet);
            } else {
                const std::string rel = "volumes/" + rec.id + "_pet.raw";
                save_raw_volume(*rec.pet, (fs::path(dir) / rel).string());
                j["pet_path"] = rel;
            }
        }
        out << j.dump() << "\n";
    }
    return jsonl;
}

} // namespace pmdx
