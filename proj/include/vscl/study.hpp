#pragma once

// Configuration-driven study pipelines behind the command-line front end:
// schema-validated JSON configs, random-variable bindings with per-ply
// expansion, a digest-keyed cache for the expensive frequency evaluations,
// and the validate/train/reliability/sensitivity runs with their artifact
// writers.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vscl/modal.hpp"
#include "vscl/reliability.hpp"
#include "vscl/sensitivity.hpp"

namespace vscl {

using nlohmann::json;
namespace fs = std::filesystem;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class MethodKind { Form, Sorm, Mcs, Mcis, Adaptive };

inline MethodKind method_kind_from(const std::string& s) {
    if (s == "form") return MethodKind::Form;
    if (s == "sorm") return MethodKind::Sorm;
    if (s == "mcs") return MethodKind::Mcs;
    if (s == "mcis") return MethodKind::Mcis;
    if (s == "adaptive") return MethodKind::Adaptive;
    throw ConfigError("method.kind must be one of form|sorm|mcs|mcis|adaptive, got '" + s + "'");
}

// One declared random variable before per-ply expansion.
struct VariableDecl {
    std::string name;
    std::string target;
    int ply = 0;          ///< 1-based ply index; 0 = not ply indexed
    bool all_plies = false;
    Family family = Family::Normal;
    double mean = 0;
    double dispersion = 0;
    DispersionKind kind = DispersionKind::CoV;
};

struct StudyConfig {
    PlateModel plate;
    std::vector<VariableDecl> declared;
    double lambda_r_fraction = 0.97;
    TrainConfig train;
    MethodKind method = MethodKind::Adaptive;
    std::vector<int> train_samples = {1000};
    AdaptiveConfig adaptive;
    long mc_samples = 10000;
    std::uint64_t seed = 1;
    long sensitivity_samples = 20000;
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;  // optional explicit groups
    std::vector<double> reference_frequencies;
    std::string out_dir = "out";
    std::string cache_dir = "cache";

    // expanded catalog, built after parsing
    std::vector<RandomVariable> catalog;
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         const std::set<std::string>& allowed,
                         const std::set<std::string>& required) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
    for (const auto& k : required)
        if (!j.count(k)) throw ConfigError(where + ": missing required key '" + k + "'");
}

inline double num(const json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<double>();
}

inline Target target_from(const std::string& s, const std::string& where) {
    static const std::map<std::string, Target> m = {
        {"E1", Target::E1},         {"E2", Target::E2},
        {"G12", Target::G12},       {"G13", Target::G13},
        {"G23", Target::G23},       {"nu12", Target::Nu12},
        {"rho", Target::Rho},       {"cutout_d", Target::CutoutDMajor},
        {"cutout_ellipticity", Target::CutoutEllipticity},
        {"cutout_xc", Target::CutoutXc},
        {"cutout_yc", Target::CutoutYc},
        {"ply_thickness", Target::PlyThickness},
        {"ply_angle_delta", Target::PlyAngleDelta}};
    auto it = m.find(s);
    if (it == m.end()) throw ConfigError(where + ": unknown target '" + s + "'");
    return it->second;
}

inline std::string target_name(Target t) {
    switch (t) {
        case Target::E1: return "E1";
        case Target::E2: return "E2";
        case Target::G12: return "G12";
        case Target::G13: return "G13";
        case Target::G23: return "G23";
        case Target::Nu12: return "nu12";
        case Target::Rho: return "rho";
        case Target::CutoutDMajor: return "cutout_d";
        case Target::CutoutEllipticity: return "cutout_ellipticity";
        case Target::CutoutXc: return "cutout_xc";
        case Target::CutoutYc: return "cutout_yc";
        case Target::PlyThickness: return "ply_thickness";
        case Target::PlyAngleDelta: return "ply_angle_delta";
    }
    return "?";
}

} // namespace detail

// Expands ply-indexed declarations into one catalog entry per ply and checks
// every binding against the plate.
inline std::vector<RandomVariable> expand_catalog(const PlateModel& plate,
                                                  const std::vector<VariableDecl>& decls) {
    std::vector<RandomVariable> catalog;
    std::set<std::string> names;
    for (const auto& d : decls) {
        const Target tgt = detail::target_from(d.target, "random_variables." + d.name);
        auto push = [&](int ply0, const std::string& name) {
            RandomVariable rv;
            rv.name = name;
            rv.target = tgt;
            rv.ply = ply0;
            rv.family = d.family;
            rv.mean = d.mean;
            rv.dispersion = d.dispersion;
            rv.kind = d.kind;
            if (rv.family == Family::LogNormal && !(rv.mean > 0))
                throw ConfigError("random_variables." + name + ": lognormal requires mean > 0");
            if (!(rv.dispersion > 0))
                throw ConfigError("random_variables." + name + ": dispersion must be positive");
            if (!names.insert(name).second)
                throw ConfigError("random_variables: duplicate name '" + name + "'");
            catalog.push_back(rv);
        };
        if (target_is_ply_indexed(tgt)) {
            if (d.all_plies) {
                for (int k = 0; k < static_cast<int>(plate.plies.size()); ++k)
                    push(k, d.name + std::to_string(k + 1));
            } else {
                if (d.ply < 1 || d.ply > static_cast<int>(plate.plies.size()))
                    throw ConfigError("random_variables." + d.name + ": ply index out of range");
                push(d.ply - 1, d.name);
            }
        } else {
            if (d.all_plies || d.ply != 0)
                throw ConfigError("random_variables." + d.name + ": target is not ply indexed");
            if ((tgt == Target::CutoutDMajor || tgt == Target::CutoutEllipticity ||
                 tgt == Target::CutoutXc || tgt == Target::CutoutYc) &&
                !plate.cutout)
                throw ConfigError("random_variables." + d.name + ": plate has no cutout to bind");
            push(-1, d.name);
        }
    }
    return catalog;
}

inline StudyConfig parse_config(const json& root) {
    using detail::num;
    using detail::require_keys;

    require_keys(root, "config",
                 {"plate", "random_variables", "limit_state", "surrogate", "method",
                  "sensitivity", "reference_frequencies", "output"},
                 {"plate"});

    StudyConfig cfg;

    const json& jp = root.at("plate");
    require_keys(jp, "plate",
                 {"a", "b", "bc", "mesh", "shear_correction", "plies", "cutout",
                  "enforce_curvature_limit", "fiber_angle_per_gauss", "assumed_shear"},
                 {"a", "b", "plies", "mesh"});
    cfg.plate.a = num(jp.at("a"), "plate.a");
    cfg.plate.b = num(jp.at("b"), "plate.b");
    if (jp.count("bc")) {
        const std::string bc = jp.at("bc").get<std::string>();
        if (bc != "SSSS") throw ConfigError("plate.bc: only SSSS is supported");
    }
    require_keys(jp.at("mesh"), "plate.mesh", {"nx", "ny"}, {"nx", "ny"});
    cfg.plate.mesh_nx = jp.at("mesh").at("nx").get<int>();
    cfg.plate.mesh_ny = jp.at("mesh").at("ny").get<int>();
    if (jp.count("shear_correction"))
        cfg.plate.shear_correction = num(jp.at("shear_correction"), "plate.shear_correction");
    if (jp.count("enforce_curvature_limit"))
        cfg.plate.enforce_curvature_limit = jp.at("enforce_curvature_limit").get<bool>();
    if (jp.count("fiber_angle_per_gauss"))
        cfg.plate.fiber_angle_per_gauss = jp.at("fiber_angle_per_gauss").get<bool>();
    if (jp.count("assumed_shear")) cfg.plate.assumed_shear = jp.at("assumed_shear").get<bool>();

    if (!jp.at("plies").is_array() || jp.at("plies").empty())
        throw ConfigError("plate.plies: expected a non-empty array");
    for (const auto& jply : jp.at("plies")) {
        require_keys(jply, "plate.plies[]",
                     {"E1", "E2", "G12", "G13", "G23", "nu12", "rho", "thickness", "theta0",
                      "theta1"},
                     {"E1", "E2", "G12", "G13", "G23", "nu12", "rho", "thickness", "theta0",
                      "theta1"});
        Ply p;
        p.E1 = num(jply.at("E1"), "ply.E1");
        p.E2 = num(jply.at("E2"), "ply.E2");
        p.G12 = num(jply.at("G12"), "ply.G12");
        p.G13 = num(jply.at("G13"), "ply.G13");
        p.G23 = num(jply.at("G23"), "ply.G23");
        p.nu12 = num(jply.at("nu12"), "ply.nu12");
        p.rho = num(jply.at("rho"), "ply.rho");
        p.thickness = num(jply.at("thickness"), "ply.thickness");
        p.theta0 = num(jply.at("theta0"), "ply.theta0");
        p.theta1 = num(jply.at("theta1"), "ply.theta1");
        cfg.plate.plies.push_back(p);
    }
    if (jp.count("cutout")) {
        require_keys(jp.at("cutout"), "plate.cutout", {"xc", "yc", "d_major", "ellipticity"},
                     {"d_major"});
        Cutout c;
        const json& jc = jp.at("cutout");
        if (jc.count("xc")) c.xc = num(jc.at("xc"), "cutout.xc");
        if (jc.count("yc")) c.yc = num(jc.at("yc"), "cutout.yc");
        c.d_major = num(jc.at("d_major"), "cutout.d_major");
        if (jc.count("ellipticity")) c.ellipticity = num(jc.at("ellipticity"), "cutout.ellipticity");
        if (!(c.ellipticity > 0 && c.ellipticity <= 1.0))
            throw ConfigError("plate.cutout.ellipticity: nominal value must lie in (0, 1]");
        cfg.plate.cutout = c;
    }
    try {
        cfg.plate.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("plate: ") + e.what());
    }

    if (root.count("random_variables")) {
        if (!root.at("random_variables").is_array())
            throw ConfigError("random_variables: expected an array");
        for (const auto& jv : root.at("random_variables")) {
            require_keys(jv, "random_variables[]",
                         {"name", "target", "ply", "family", "mean", "cov", "std"},
                         {"name", "target", "family", "mean"});
            VariableDecl d;
            d.name = jv.at("name").get<std::string>();
            d.target = jv.at("target").get<std::string>();
            const std::string fam = jv.at("family").get<std::string>();
            if (fam == "normal") d.family = Family::Normal;
            else if (fam == "lognormal") d.family = Family::LogNormal;
            else throw ConfigError("random_variables." + d.name + ": family must be normal|lognormal");
            d.mean = num(jv.at("mean"), "random_variables." + d.name + ".mean");
            if (jv.count("cov") == jv.count("std"))
                throw ConfigError("random_variables." + d.name +
                                  ": exactly one of cov or std is required");
            if (jv.count("cov")) {
                d.dispersion = num(jv.at("cov"), "rv.cov");
                d.kind = DispersionKind::CoV;
            } else {
                d.dispersion = num(jv.at("std"), "rv.std");
                d.kind = DispersionKind::AbsoluteStd;
            }
            if (jv.count("ply")) {
                if (jv.at("ply").is_string() && jv.at("ply").get<std::string>() == "all")
                    d.all_plies = true;
                else if (jv.at("ply").is_number_integer())
                    d.ply = jv.at("ply").get<int>();
                else
                    throw ConfigError("random_variables." + d.name + ".ply: integer or \"all\"");
            }
            cfg.declared.push_back(d);
        }
        cfg.catalog = expand_catalog(cfg.plate, cfg.declared);
    }

    if (root.count("limit_state")) {
        require_keys(root.at("limit_state"), "limit_state", {"lambda_r_fraction"},
                     {"lambda_r_fraction"});
        cfg.lambda_r_fraction = num(root.at("limit_state").at("lambda_r_fraction"),
                                    "limit_state.lambda_r_fraction");
        if (!(cfg.lambda_r_fraction > 0))
            throw ConfigError("limit_state.lambda_r_fraction: must be positive");
    }

    if (root.count("surrogate")) {
        const json& js = root.at("surrogate");
        require_keys(js, "surrogate",
                     {"hidden", "seed", "batch", "learning_rate", "momentum", "lr_decay",
                      "max_epochs", "patience"},
                     {"hidden"});
        cfg.train.hidden = js.at("hidden").get<int>();
        if (cfg.train.hidden < 1) throw ConfigError("surrogate.hidden: must be >= 1");
        if (js.count("seed")) cfg.train.seed = js.at("seed").get<std::uint64_t>();
        if (js.count("batch")) cfg.train.batch = js.at("batch").get<int>();
        if (js.count("learning_rate")) cfg.train.learning_rate = num(js.at("learning_rate"), "surrogate.learning_rate");
        if (js.count("momentum")) cfg.train.momentum = num(js.at("momentum"), "surrogate.momentum");
        if (js.count("lr_decay")) cfg.train.lr_decay = num(js.at("lr_decay"), "surrogate.lr_decay");
        if (js.count("max_epochs")) cfg.train.max_epochs = js.at("max_epochs").get<int>();
        if (js.count("patience")) cfg.train.patience = js.at("patience").get<int>();
    }

    if (root.count("method")) {
        const json& jm = root.at("method");
        require_keys(jm, "method",
                     {"kind", "n_per_stage", "max_stages", "mc_samples", "is_sigma",
                      "form_epsilon", "form_max_iter", "train_samples", "seed"},
                     {});
        if (jm.count("kind")) cfg.method = method_kind_from(jm.at("kind").get<std::string>());
        if (jm.count("n_per_stage")) cfg.adaptive.n_per_stage = jm.at("n_per_stage").get<int>();
        if (jm.count("max_stages")) cfg.adaptive.max_stages = jm.at("max_stages").get<int>();
        if (jm.count("mc_samples")) cfg.mc_samples = jm.at("mc_samples").get<long>();
        if (jm.count("is_sigma")) cfg.adaptive.is_sigma = num(jm.at("is_sigma"), "method.is_sigma");
        if (jm.count("form_epsilon"))
            cfg.adaptive.form_epsilon = num(jm.at("form_epsilon"), "method.form_epsilon");
        if (jm.count("form_max_iter")) cfg.adaptive.form_max_iter = jm.at("form_max_iter").get<int>();
        if (jm.count("seed")) cfg.seed = jm.at("seed").get<std::uint64_t>();
        if (jm.count("train_samples")) {
            cfg.train_samples.clear();
            if (jm.at("train_samples").is_array())
                for (const auto& v : jm.at("train_samples"))
                    cfg.train_samples.push_back(v.get<int>());
            else
                cfg.train_samples.push_back(jm.at("train_samples").get<int>());
        }
        if (cfg.mc_samples < 100) throw ConfigError("method.mc_samples: must be >= 100");
        if (cfg.adaptive.n_per_stage < 2) throw ConfigError("method.n_per_stage: must be >= 2");
        for (int ts : cfg.train_samples)
            if (ts < 2) throw ConfigError("method.train_samples: entries must be >= 2");
    }

    if (root.count("sensitivity")) {
        const json& jse = root.at("sensitivity");
        require_keys(jse, "sensitivity", {"samples", "groups"}, {});
        if (jse.count("samples")) cfg.sensitivity_samples = jse.at("samples").get<long>();
        if (cfg.sensitivity_samples < 100)
            throw ConfigError("sensitivity.samples: must be >= 100");
        if (jse.count("groups")) {
            for (const auto& jg : jse.at("groups")) {
                require_keys(jg, "sensitivity.groups[]", {"name", "members"}, {"name", "members"});
                std::vector<std::string> members;
                for (const auto& mname : jg.at("members")) members.push_back(mname.get<std::string>());
                cfg.groups.emplace_back(jg.at("name").get<std::string>(), members);
            }
        }
    }

    if (root.count("reference_frequencies")) {
        for (const auto& v : root.at("reference_frequencies"))
            cfg.reference_frequencies.push_back(v.get<double>());
    }

    if (root.count("output")) {
        require_keys(root.at("output"), "output", {"dir", "cache"}, {});
        if (root.at("output").count("dir")) cfg.out_dir = root.at("output").at("dir").get<std::string>();
        if (root.at("output").count("cache"))
            cfg.cache_dir = root.at("output").at("cache").get<std::string>();
    }

    return cfg;
}

inline StudyConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    json root;
    try {
        root = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("parse error in ") + path + ": " + e.what());
    }
    return parse_config(root);
}

// Serialization back to the schema; parse(serialize(cfg)) reproduces the
// parsed structure.
inline json to_json(const StudyConfig& cfg) {
    json root;
    json jp;
    jp["a"] = cfg.plate.a;
    jp["b"] = cfg.plate.b;
    jp["bc"] = "SSSS";
    jp["mesh"] = {{"nx", cfg.plate.mesh_nx}, {"ny", cfg.plate.mesh_ny}};
    jp["shear_correction"] = cfg.plate.shear_correction;
    jp["enforce_curvature_limit"] = cfg.plate.enforce_curvature_limit;
    jp["fiber_angle_per_gauss"] = cfg.plate.fiber_angle_per_gauss;
    jp["assumed_shear"] = cfg.plate.assumed_shear;
    jp["plies"] = json::array();
    for (const auto& p : cfg.plate.plies)
        jp["plies"].push_back({{"E1", p.E1}, {"E2", p.E2}, {"G12", p.G12}, {"G13", p.G13},
                               {"G23", p.G23}, {"nu12", p.nu12}, {"rho", p.rho},
                               {"thickness", p.thickness}, {"theta0", p.theta0},
                               {"theta1", p.theta1}});
    if (cfg.plate.cutout)
        jp["cutout"] = {{"xc", cfg.plate.cutout->xc}, {"yc", cfg.plate.cutout->yc},
                        {"d_major", cfg.plate.cutout->d_major},
                        {"ellipticity", cfg.plate.cutout->ellipticity}};
    root["plate"] = jp;

    root["random_variables"] = json::array();
    for (const auto& d : cfg.declared) {
        json jv;
        jv["name"] = d.name;
        jv["target"] = d.target;
        jv["family"] = d.family == Family::Normal ? "normal" : "lognormal";
        jv["mean"] = d.mean;
        if (d.kind == DispersionKind::CoV) jv["cov"] = d.dispersion;
        else jv["std"] = d.dispersion;
        if (d.all_plies) jv["ply"] = "all";
        else if (d.ply != 0) jv["ply"] = d.ply;
        root["random_variables"].push_back(jv);
    }

    root["limit_state"] = {{"lambda_r_fraction", cfg.lambda_r_fraction}};
    root["surrogate"] = {{"hidden", cfg.train.hidden},       {"seed", cfg.train.seed},
                         {"batch", cfg.train.batch},         {"learning_rate", cfg.train.learning_rate},
                         {"momentum", cfg.train.momentum},   {"lr_decay", cfg.train.lr_decay},
                         {"max_epochs", cfg.train.max_epochs}, {"patience", cfg.train.patience}};
    json jm;
    switch (cfg.method) {
        case MethodKind::Form: jm["kind"] = "form"; break;
        case MethodKind::Sorm: jm["kind"] = "sorm"; break;
        case MethodKind::Mcs: jm["kind"] = "mcs"; break;
        case MethodKind::Mcis: jm["kind"] = "mcis"; break;
        case MethodKind::Adaptive: jm["kind"] = "adaptive"; break;
    }
    jm["n_per_stage"] = cfg.adaptive.n_per_stage;
    jm["max_stages"] = cfg.adaptive.max_stages;
    jm["mc_samples"] = cfg.mc_samples;
    jm["is_sigma"] = cfg.adaptive.is_sigma;
    jm["form_epsilon"] = cfg.adaptive.form_epsilon;
    jm["form_max_iter"] = cfg.adaptive.form_max_iter;
    jm["train_samples"] = cfg.train_samples;
    jm["seed"] = cfg.seed;
    root["method"] = jm;

    json jse;
    jse["samples"] = cfg.sensitivity_samples;
    if (!cfg.groups.empty()) {
        jse["groups"] = json::array();
        for (const auto& [name, members] : cfg.groups)
            jse["groups"].push_back({{"name", name}, {"members", members}});
    }
    root["sensitivity"] = jse;

    if (!cfg.reference_frequencies.empty())
        root["reference_frequencies"] = cfg.reference_frequencies;
    root["output"] = {{"dir", cfg.out_dir}, {"cache", cfg.cache_dir}};
    return root;
}

// ---------------------------------------------------------------------------
// digests and the frequency-evaluation cache

inline std::uint64_t plate_digest(const PlateModel& p) {
    Fnv1a h;
    h.update(p.a);
    h.update(p.b);
    h.update(static_cast<std::uint64_t>(p.mesh_nx));
    h.update(static_cast<std::uint64_t>(p.mesh_ny));
    h.update(p.shear_correction);
    h.update(static_cast<std::uint64_t>(p.fiber_angle_per_gauss));
    h.update(static_cast<std::uint64_t>(p.assumed_shear));
    for (const auto& ply : p.plies) {
        h.update(ply.E1); h.update(ply.E2); h.update(ply.G12); h.update(ply.G13);
        h.update(ply.G23); h.update(ply.nu12); h.update(ply.rho);
        h.update(ply.thickness); h.update(ply.theta0); h.update(ply.theta1);
    }
    if (p.cutout) {
        h.update(p.cutout->xc); h.update(p.cutout->yc);
        h.update(p.cutout->d_major); h.update(p.cutout->ellipticity);
    }
    return h.digest();
}

inline std::uint64_t study_digest(const StudyConfig& cfg) {
    Fnv1a h;
    h.update(plate_digest(cfg.plate));
    for (const auto& rv : cfg.catalog) {
        h.update(rv.name);
        h.update(detail::target_name(rv.target));
        h.update(static_cast<std::uint64_t>(rv.ply + 1));
        h.update(static_cast<std::uint64_t>(rv.family == Family::LogNormal));
        h.update(rv.mean);
        h.update(rv.dispersion);
        h.update(static_cast<std::uint64_t>(rv.kind == DispersionKind::CoV));
    }
    h.update(cfg.lambda_r_fraction);
    return h.digest();
}

// One file per evaluated sample, written atomically; each entry restates its
// own key so corrupted or foreign files are detected on read.
class FemCache {
public:
    FemCache() = default;
    explicit FemCache(const fs::path& dir) : dir_(dir), enabled_(true) {
        fs::create_directories(dir_);
    }

    bool lookup(std::uint64_t key, double& omega) const {
        if (!enabled_) return false;
        std::ifstream f(entry_path(key));
        if (!f) return false;
        std::string stored_key, val;
        f >> stored_key >> val;
        if (!f || stored_key != hex64(key)) return false;  // corruption
        omega = std::strtod(val.c_str(), nullptr);
        return true;
    }

    void store(std::uint64_t key, double omega) const {
        if (!enabled_) return;
        const fs::path final_path = entry_path(key);
        const fs::path tmp = final_path.string() + ".tmp";
        {
            std::ofstream f(tmp);
            f << hex64(key) << " " << hexfloat(omega) << "\n";
        }
        fs::rename(tmp, final_path);
    }

private:
    fs::path entry_path(std::uint64_t key) const { return dir_ / (hex64(key) + ".omega"); }
    fs::path dir_;
    bool enabled_ = false;
};

// Cached fundamental-frequency evaluator over the random-variable catalog.
struct FrequencyEvaluator {
    const StudyConfig* cfg = nullptr;
    FemCache cache;
    std::uint64_t base_digest = 0;
    mutable std::atomic<long> solves{0};
    mutable std::atomic<long> cache_hits{0};

    FrequencyEvaluator(const StudyConfig& c, const FemCache& fc) : cfg(&c), cache(fc) {
        base_digest = study_digest(c);
    }

    std::uint64_t row_key(const Eigen::VectorXd& x) const {
        Fnv1a h;
        h.update(base_digest);
        for (Eigen::Index i = 0; i < x.size(); ++i) h.update(x(i));
        return h.digest();
    }

    double omega(const Eigen::VectorXd& x) const {
        const std::uint64_t key = row_key(x);
        double w;
        if (cache.lookup(key, w)) {
            cache_hits.fetch_add(1);
            return w;
        }
        const PlateModel p = apply_sample(cfg->plate, cfg->catalog, x);
        w = fundamental_frequency(p);
        solves.fetch_add(1);
        cache.store(key, w);
        return w;
    }
};

// ---------------------------------------------------------------------------
// pipelines

// Collects artifacts for the run record; every file the pipelines emit goes
// through here exactly once.
struct RunRecord {
    std::uint64_t config_digest = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> artifacts;
    double wall_seconds = 0;

    void write(const fs::path& out_dir) const {
        json j;
        j["config_digest"] = hex64(config_digest);
        j["seed"] = seed;
        j["wall_seconds"] = wall_seconds;
        j["artifacts"] = artifacts;
        std::ofstream f(out_dir / "run_record.json");
        f << j.dump(2) << "\n";
    }
};

namespace detail {

class ArtifactWriter {
public:
    ArtifactWriter(const fs::path& dir, RunRecord& rec) : dir_(dir), rec_(&rec) {
        fs::create_directories(dir);
    }
    void emit(const std::string& name, const std::string& content) {
        std::ofstream f(dir_ / name);
        f << content;
        rec_->artifacts.push_back(name);
    }
    fs::path dir() const { return dir_; }

private:
    fs::path dir_;
    RunRecord* rec_;
};

inline std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return std::string(buf);
}

} // namespace detail

inline GaussianSpace space_of(const StudyConfig& cfg) {
    if (cfg.catalog.empty())
        throw ConfigError("random_variables: this command needs at least one random variable");
    return GaussianSpace::from_catalog(cfg.catalog);
}

// Sensitivity groups: explicit config groups resolved by variable name, or
// automatic pooling of per-ply expansions of the same declaration.
inline std::vector<VariableGroup> grouped(const StudyConfig& cfg, const GaussianSpace& space) {
    std::vector<VariableGroup> gs;
    if (!cfg.groups.empty()) {
        std::map<std::string, int> index_of;
        for (int i = 0; i < space.dim(); ++i) index_of[space.vars[static_cast<size_t>(i)].name] = i;
        for (const auto& [name, members] : cfg.groups) {
            VariableGroup g;
            g.name = name;
            for (const auto& m : members) {
                auto it = index_of.find(m);
                if (it == index_of.end())
                    throw ConfigError("sensitivity.groups: unknown variable '" + m + "'");
                g.members.push_back(it->second);
            }
            gs.push_back(g);
        }
        return gs;
    }
    // auto: pool per-ply expansions under the declared name
    int i = 0;
    for (const auto& d : cfg.declared) {
        VariableGroup g;
        g.name = d.name;
        const Target tgt = detail::target_from(d.target, "group");
        const int span = (target_is_ply_indexed(tgt) && d.all_plies)
                             ? static_cast<int>(cfg.plate.plies.size())
                             : 1;
        for (int k = 0; k < span; ++k) g.members.push_back(i++);
        gs.push_back(g);
    }
    return gs;
}

// Mean fundamental frequency and the derived limit-state threshold.
inline double lambda_mean(const StudyConfig& cfg, const FrequencyEvaluator& ev) {
    const GaussianSpace space = space_of(cfg);
    return ev.omega(space.mean_point());
}

struct ValidateFemRow {
    int nx = 0, ny = 0;
    std::vector<double> freqs;
    double seconds = 0;
};

// Mesh-refinement study on 10x10 / 20x20 / 30x30, five lowest modes each.
inline std::vector<ValidateFemRow> run_validate_fem(const StudyConfig& cfg, RunRecord& rec,
                                                    int n_threads = 1) {
    detail::ArtifactWriter out(cfg.out_dir, rec);
    std::vector<ValidateFemRow> rows;
    std::string table = "# nx ny omega1 omega2 omega3 omega4 omega5 seconds\n";
    std::string human;
    for (int n : {10, 20, 30}) {
        PlateModel p = cfg.plate;
        p.mesh_nx = p.mesh_ny = n;
        const auto t0 = std::chrono::steady_clock::now();
        const ModalResult r = assemble_and_solve(p, 5, n_threads);
        ValidateFemRow row;
        row.nx = row.ny = n;
        row.freqs = r.frequencies;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rows.push_back(row);

        table += detail::fmt("%d %d", n, n);
        human += detail::fmt("mesh %2dx%-2d :", n, n);
        for (double w : r.frequencies) {
            table += detail::fmt(" %.10g", w);
            human += detail::fmt(" %10.2f", w);
        }
        table += detail::fmt(" %.3f\n", row.seconds);
        human += "\n";
        if (!cfg.reference_frequencies.empty() && n == 30) {
            human += "reference  :";
            for (size_t i = 0; i < cfg.reference_frequencies.size() && i < r.frequencies.size(); ++i)
                human += detail::fmt(" %10.2f", cfg.reference_frequencies[i]);
            human += "\ndeviation %:";
            for (size_t i = 0; i < cfg.reference_frequencies.size() && i < r.frequencies.size(); ++i)
                human += detail::fmt(" %10.3f", 100.0 * (r.frequencies[i] - cfg.reference_frequencies[i]) /
                                                    cfg.reference_frequencies[i]);
            human += "\n";
        }
    }
    out.emit("fem_convergence.tsv", table);
    out.emit("fem_convergence.txt", human);
    return rows;
}

inline std::string samples_table(const GaussianSpace& space, const SampleSet& s) {
    std::string t = "#";
    for (const auto& v : space.vars) t += " " + v.name;
    t += " g\n";
    for (int i = 0; i < s.n(); ++i) {
        for (int j = 0; j < s.dim(); ++j) t += detail::fmt(" %.17g", s.x(i, j));
        t += s.g.size() ? detail::fmt(" %.17g\n", s.g(i)) : " nan\n";
    }
    return t;
}

struct TrainRunRow {
    int n_samples = 0;
    double mse_test = 0;
    double seconds = 0;
    long fem_solves = 0;
    long cache_hits = 0;
};

// Global LHS design, cached frequency evaluation, training and persistence.
// One row per requested training-set size.
inline std::vector<TrainRunRow> run_train(const StudyConfig& cfg, RunRecord& rec,
                                          int n_threads = 1) {
    detail::ArtifactWriter out(cfg.out_dir, rec);
    const GaussianSpace space = space_of(cfg);
    FemCache cache(fs::path(cfg.cache_dir));
    FrequencyEvaluator ev(cfg, cache);

    const double lam_mean = lambda_mean(cfg, ev);
    const double lam_r = cfg.lambda_r_fraction * lam_mean;

    auto g_true = [&](const Eigen::VectorXd& x) { return limit_state(ev.omega(x), lam_r); };

    std::vector<TrainRunRow> rows;
    std::string table = "# n_samples mse_test mse_train mse_validation epochs seconds fem_solves cache_hits warnings\n";
    for (size_t si = 0; si < cfg.train_samples.size(); ++si) {
        const int n = cfg.train_samples[si];
        const auto t0 = std::chrono::steady_clock::now();
        const long solves0 = ev.solves.load(), hits0 = ev.cache_hits.load();

        SampleSet s = lhs_sample(n, space, cfg.seed + si);
        auto evres = detail::evaluate_stage(g_true, space, s, std::nullopt, 1.0,
                                            cfg.seed ^ 0x7a11ull, n_threads);
        s.x = evres.x;
        s.g = evres.g;
        for (int i = 0; i < s.n(); ++i)
            if (!evres.valid[static_cast<size_t>(i)])
                throw std::runtime_error("run_train: frequency evaluation failed");

        TrainConfig tc = cfg.train;
        auto [net, repr] = train(s, tc);

        TrainRunRow row;
        row.n_samples = n;
        row.mse_test = repr.mse_test;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        row.fem_solves = ev.solves.load() - solves0;
        row.cache_hits = ev.cache_hits.load() - hits0;
        rows.push_back(row);

        const std::string net_name = "net_" + std::to_string(n) + ".txt";
        save(net, (out.dir() / net_name).string());
        rec.artifacts.push_back(net_name);
        out.emit("samples_" + std::to_string(n) + ".tsv", samples_table(space, s));

        std::string warn;
        for (const auto& w : repr.warnings) warn += (warn.empty() ? "" : ";") + w;
        table += detail::fmt("%d %.6e %.6e %.6e %d %.3f %ld %ld %s\n", n, repr.mse_test,
                             repr.mse_train, repr.mse_validation, repr.epochs, row.seconds,
                             row.fem_solves, row.cache_hits, warn.empty() ? "-" : warn.c_str());
    }
    // the last trained net is the study's working surrogate
    fs::copy_file(out.dir() / ("net_" + std::to_string(cfg.train_samples.back()) + ".txt"),
                  out.dir() / "net.txt", fs::copy_options::overwrite_existing);
    rec.artifacts.push_back("net.txt");
    std::string lam = detail::fmt("lambda_mean %.17g\nlambda_r %.17g\n", lam_mean, lam_r);
    out.emit("limit_state.txt", lam);
    out.emit("train_table.tsv", table);
    return rows;
}

inline SurrogateNet load_study_net(const StudyConfig& cfg) {
    const fs::path p = fs::path(cfg.out_dir) / "net.txt";
    if (!fs::exists(p))
        throw ConfigError("no trained surrogate at " + p.string() +
                          "; run the train command for this config first");
    SurrogateNet net = load(p.string());
    if (net.inputs() != static_cast<int>(cfg.catalog.size()))
        throw SurrogateBindingError("net at " + p.string() + " has " +
                                    std::to_string(net.inputs()) +
                                    " inputs but the config declares " +
                                    std::to_string(cfg.catalog.size()) + " random variables");
    return net;
}

inline std::string reliability_tsv_header() {
    return "# method pf beta std n_samples n_fem seconds seed\n";
}

inline std::string reliability_tsv_row(const ReliabilityResult& r, long n_fem) {
    return detail::fmt("%s %.10e %.6f %.6e %ld %ld %.3f %llu\n", method_name(r.method), r.pf,
                       r.beta, r.estimator_std, r.n_samples, n_fem, r.wall_seconds,
                       static_cast<unsigned long long>(r.seed));
}

struct ReliabilityRun {
    std::vector<ReliabilityResult> results;
    std::vector<StageRecord> stages;  // adaptive only
    long n_fem = 0;
    bool adaptive_aborted = false;
};

// Reliability pipeline. form/sorm/mcs/mcis run on the trained surrogate;
// adaptive drives the full retraining loop against the FEM and re-emits its
// net.
inline ReliabilityRun run_reliability(const StudyConfig& cfg, MethodKind kind, RunRecord& rec,
                                      int n_threads = 1) {
    detail::ArtifactWriter out(cfg.out_dir, rec);
    const GaussianSpace space = space_of(cfg);
    ReliabilityRun run;
    std::string tsv = reliability_tsv_header();
    std::string text;

    auto lambda_r_of = [&](const FrequencyEvaluator& ev) {
        return cfg.lambda_r_fraction * lambda_mean(cfg, ev);
    };

    if (kind == MethodKind::Adaptive) {
        FemCache cache{fs::path(cfg.cache_dir)};
        FrequencyEvaluator ev(cfg, cache);
        const double lam_r = lambda_r_of(ev);
        auto g_true = [&](const Eigen::VectorXd& x) { return limit_state(ev.omega(x), lam_r); };

        AdaptiveConfig ac = cfg.adaptive;
        ac.train = cfg.train;
        ac.mcis_samples = cfg.mc_samples;
        ac.sample_seed = cfg.seed * 1000 + 7;
        ac.mcis_seed = cfg.seed * 1000 + 11;
        ac.n_threads = n_threads;

        const AdaptiveResult ar = adaptive_ann_mcis(g_true, space, ac);
        run.stages = ar.stages;
        run.n_fem = ev.solves.load();
        run.adaptive_aborted = ar.aborted;

        std::string st =
            "# stage n_new n_cumulative pf_form pf_sorm beta sorm_singular mse_test train_seed seconds\n";
        for (const auto& s : ar.stages)
            st += detail::fmt("%d %d %d %.6e %.6e %.6f %d %.6e %llu %.3f\n", s.stage, s.n_new,
                              s.n_cumulative, s.pf_form, s.pf_sorm, s.beta,
                              static_cast<int>(s.sorm_singular), s.train_mse_test,
                              static_cast<unsigned long long>(s.train_seed), s.seconds);
        out.emit("stage_trace.tsv", st);

        if (ar.aborted) {
            out.emit("reliability.tsv", tsv);
            throw NonConvergenceError("adaptive loop: FORM did not converge at stage " +
                                          std::to_string(ar.stages.back().stage),
                                      static_cast<int>(ar.stages.size()));
        }

        save(ar.net, (out.dir() / "net.txt").string());
        rec.artifacts.push_back("net.txt");
        out.emit("training_samples.tsv", samples_table(space, ar.training_data));

        run.results.push_back(ar.mcis);
        tsv += reliability_tsv_row(ar.mcis, run.n_fem);
        text += detail::fmt("ANN-MCIS pf = %.6g (std %.3g), stages = %zu, fem solves = %ld\n",
                            ar.mcis.pf, ar.mcis.estimator_std, ar.stages.size(), run.n_fem);

        // brute-force check on the same frozen surrogate
        auto g_net = [&](const Eigen::VectorXd& x) { return ar.net.forward(x); };
        ReliabilityResult mc = mcs_pf(g_net, space, std::max<long>(cfg.mc_samples * 10, 100000),
                                      cfg.seed * 1000 + 13);
        mc.method = Method::AnnMcs;
        run.results.push_back(mc);
        tsv += reliability_tsv_row(mc, run.n_fem);
        text += detail::fmt("ANN-MCS  pf = %.6g (std %.3g) on the same net\n", mc.pf,
                            mc.estimator_std);
    } else {
        const SurrogateNet net = load_study_net(cfg);
        auto g_net = [&](const Eigen::VectorXd& x) { return net.forward(x); };
        const ZFunction zf = surrogate_zfun(net, space);

        if (kind == MethodKind::Form || kind == MethodKind::Sorm || kind == MethodKind::Mcis) {
            MppResult mpp = form_search(zf, space.dim(), cfg.adaptive.form_epsilon,
                                        cfg.adaptive.form_max_iter);
            if (!mpp.converged)
                throw NonConvergenceError("form_search did not converge",
                                          static_cast<int>(mpp.trace.size()));
            mpp.x_star = space.from_z(mpp.z_star);

            std::string mt = "# variable z_star x_star\n";
            for (int i = 0; i < space.dim(); ++i)
                mt += detail::fmt("%s %.10g %.10g\n", space.vars[static_cast<size_t>(i)].name.c_str(),
                                  mpp.z_star(i), mpp.x_star(i));
            out.emit("mpp.tsv", mt);

            if (kind == MethodKind::Form || kind == MethodKind::Sorm) {
                ReliabilityResult fr;
                fr.method = Method::FORM;
                fr.pf = form_pf(mpp.beta);
                fr.beta = mpp.beta;
                fr.seed = cfg.seed;
                run.results.push_back(fr);
                tsv += reliability_tsv_row(fr, 0);
                text += detail::fmt("FORM beta = %.6f, pf = %.6g\n", fr.beta, fr.pf);
            }
            if (kind == MethodKind::Sorm) {
                const SormResult sr = sorm_pf(mpp, zf.hessian(mpp.z_star));
                ReliabilityResult rr;
                rr.method = Method::SORM;
                rr.pf = sr.pf;
                rr.beta = sr.beta_equivalent;
                rr.seed = cfg.seed;
                run.results.push_back(rr);
                tsv += reliability_tsv_row(rr, 0);
                text += detail::fmt("SORM beta = %.6f, pf = %.6g%s\n", rr.beta, rr.pf,
                                    sr.curvature_singular ? " (curvature singular, FORM fallback)"
                                                          : "");
            }
            if (kind == MethodKind::Mcis) {
                ReliabilityResult ir =
                    is_pf(g_net, space, InstrumentalDensity::at(mpp.z_star, cfg.adaptive.is_sigma),
                          cfg.mc_samples, cfg.seed * 1000 + 11);
                ir.method = Method::AnnMcis;
                run.results.push_back(ir);
                tsv += reliability_tsv_row(ir, 0);
                text += detail::fmt("ANN-MCIS pf = %.6g (std %.3g)\n", ir.pf, ir.estimator_std);
            }
        } else {  // Mcs
            ReliabilityResult mc = mcs_pf(g_net, space, cfg.mc_samples, cfg.seed * 1000 + 13);
            mc.method = Method::AnnMcs;
            run.results.push_back(mc);
            tsv += reliability_tsv_row(mc, 0);
            text += detail::fmt("ANN-MCS pf = %.6g (std %.3g, cov %.3g)\n", mc.pf,
                                mc.estimator_std, mc.cov);
        }
    }

    out.emit("reliability.tsv", tsv);
    out.emit("reliability.txt", text);
    return run;
}

struct SensitivityRun {
    SensitivityReport garson_grouped, garson_ungrouped;
    SensitivityReport total_mcs_grouped, total_mcs_ungrouped;
    SensitivityReport total_is_grouped;
};

// Garson indices from the stored net plus pick-freeze total-effect indices of
// the failure indicator, grouped and ungrouped, with bar-chart data files.
inline SensitivityRun run_sensitivity(const StudyConfig& cfg, RunRecord& rec) {
    detail::ArtifactWriter out(cfg.out_dir, rec);
    const GaussianSpace space = space_of(cfg);
    const SurrogateNet net = load_study_net(cfg);
    auto g_net = [&](const Eigen::VectorXd& x) { return net.forward(x); };

    const auto groups = grouped(cfg, space);
    const auto singles = ungrouped(space);

    SensitivityRun run;
    run.garson_grouped = garson_si(net, groups);
    run.garson_ungrouped = garson_si(net, singles);
    run.total_mcs_grouped =
        total_effect_indices(g_net, space, cfg.sensitivity_samples, cfg.seed * 1000 + 17, groups);
    run.total_mcs_ungrouped =
        total_effect_indices(g_net, space, cfg.sensitivity_samples, cfg.seed * 1000 + 17, singles);

    // IS-reweighted variant: reuse an importance stream centered at the MPP
    {
        const ZFunction zf = surrogate_zfun(net, space);
        MppResult mpp = form_search(zf, space.dim(), cfg.adaptive.form_epsilon,
                                    cfg.adaptive.form_max_iter);
        if (mpp.converged) {
            const long N = cfg.sensitivity_samples;
            Rng rng(cfg.seed * 1000 + 19);
            IsReuse reuse;
            reuse.z.resize(N, space.dim());
            reuse.weights.resize(N);
            for (long i = 0; i < N; ++i) {
                double logw = 0;
                for (int j = 0; j < space.dim(); ++j) {
                    const double xi = rng.normal();
                    const double zj = mpp.z_star(j) + cfg.adaptive.is_sigma * xi;
                    reuse.z(i, j) = zj;
                    logw += -0.5 * zj * zj + 0.5 * xi * xi + std::log(cfg.adaptive.is_sigma);
                }
                reuse.weights(i) = std::exp(logw);
            }
            run.total_is_grouped = total_effect_indices(g_net, space, N, cfg.seed * 1000 + 19,
                                                        groups, reuse);
        }
    }

    // bar-chart data: raw index plus its share of the column total, which is
    // the normalization the Garson partition carries by construction
    auto table = [](const SensitivityReport& r, const char* method) {
        double sum = 0;
        for (double v : r.index) sum += v;
        std::string t = "# name index share method\n";
        for (size_t i = 0; i < r.names.size(); ++i)
            t += detail::fmt("%s %.8f %.8f %s\n", r.names[i].c_str(), r.index[i],
                             sum > 0 ? r.index[i] / sum : 0.0, method);
        return t;
    };
    out.emit("sensitivity_garson_grouped.tsv", table(run.garson_grouped, "garson"));
    out.emit("sensitivity_garson.tsv", table(run.garson_ungrouped, "garson"));
    out.emit("sensitivity_total_grouped.tsv", table(run.total_mcs_grouped, "total-mcs"));
    out.emit("sensitivity_total.tsv", table(run.total_mcs_ungrouped, "total-mcs"));
    if (!run.total_is_grouped.names.empty())
        out.emit("sensitivity_total_is_grouped.tsv", table(run.total_is_grouped, "total-is"));
    return run;
}

// Consolidated text summary of whatever artifacts are present in a study
// output directory.
inline std::string run_report(const std::string& out_dir) {
    std::string rep;
    for (const char* name : {"fem_convergence.txt", "train_table.tsv", "limit_state.txt",
                             "reliability.txt", "stage_trace.tsv",
                             "sensitivity_garson_grouped.tsv", "sensitivity_total_grouped.tsv"}) {
        const fs::path p = fs::path(out_dir) / name;
        if (!fs::exists(p)) continue;
        rep += "== " + std::string(name) + " ==\n";
        std::ifstream f(p);
        std::stringstream ss;
        ss << f.rdbuf();
        rep += ss.str();
        rep += "\n";
    }
    if (rep.empty()) rep = "no artifacts found in " + out_dir + "\n";
    return rep;
}

} // namespace vscl
