#include "sceneforge/scene_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sceneforge {

namespace {

using nlohmann::json;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        out = j.at(key).get<T>();
    }
}

std::string resolve(const std::string& p, const std::filesystem::path& base_dir) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) {
        path = base_dir / path;
    }
    return path.lexically_normal().string();
}

StageConfig parse_stage(const json& j) {
    StageConfig cfg;
    read_opt(j, "alpha_interp", cfg.alpha_interp);
    read_opt(j, "t_b", cfg.t_b);
    read_opt(j, "steps", cfg.steps);
    if (j.contains("stride")) {
        const json& s = j.at("stride");
        if (s.contains("view")) {
            cfg.stride.view_h = cfg.stride.view_w = s.at("view").get<int>();
        }
        read_opt(s, "view_h", cfg.stride.view_h);
        read_opt(s, "view_w", cfg.stride.view_w);
        read_opt(s, "s_back", cfg.stride.s_back);
        read_opt(s, "s_inst", cfg.stride.s_inst);
        read_opt(s, "beta_over", cfg.stride.beta_over);
    }
    if (j.contains("perturb")) {
        const json& p = j.at("perturb");
        read_opt(p, "d_r", cfg.perturb.d_r);
        read_opt(p, "sigma", cfg.perturb.sigma);
        read_opt(p, "p_max", cfg.perturb.p_max);
        read_opt(p, "p_base", cfg.perturb.p_base);
        read_opt(p, "canny_lo", cfg.perturb.canny_lo);
        read_opt(p, "canny_hi", cfg.perturb.canny_hi);
        read_opt(p, "flip_inequality", cfg.perturb.flip_inequality);
    }
    cfg.perturb.alpha_interp = cfg.alpha_interp;
    return cfg;
}

json stage_to_json(const StageConfig& c) {
    return {{"alpha_interp", c.alpha_interp},
            {"t_b", c.t_b},
            {"steps", c.steps},
            {"stride",
             {{"view_h", c.stride.view_h},
              {"view_w", c.stride.view_w},
              {"s_back", c.stride.s_back},
              {"s_inst", c.stride.s_inst},
              {"beta_over", c.stride.beta_over}}},
            {"perturb",
             {{"d_r", c.perturb.d_r},
              {"sigma", c.perturb.sigma},
              {"p_max", c.perturb.p_max},
              {"p_base", c.perturb.p_base},
              {"canny_lo", c.perturb.canny_lo},
              {"canny_hi", c.perturb.canny_hi},
              {"flip_inequality", c.perturb.flip_inequality}}}};
}

InstanceSpec parse_instance(const json& j, const std::filesystem::path& base_dir) {
    InstanceSpec inst;
    inst.id = j.at("id").get<int>();
    inst.text = j.at("text").get<std::string>();
    const auto box = j.at("bbox").get<std::vector<int>>();
    if (box.size() != 4) {
        throw ConfigError("instance " + std::to_string(inst.id) + ": bbox must be [x, y, w, h]");
    }
    inst.bbox = PixelRect{box[0], box[1], box[2], box[3]};
    const json& kps = j.at("keypoints");
    if (!kps.is_array() || kps.size() != kPoseKeypoints) {
        throw ConfigError("instance " + std::to_string(inst.id) + ": keypoints must list " +
                          std::to_string(kPoseKeypoints) + " entries");
    }
    for (std::size_t k = 0; k < kps.size(); ++k) {
        const auto v = kps[k].get<std::vector<double>>();
        if (v.size() != 3) {
            throw ConfigError("instance " + std::to_string(inst.id) + ": keypoint " + std::to_string(k) +
                              " must be [x, y, confidence]");
        }
        Keypoint& kp = inst.keypoints[k];
        kp = Keypoint{v[0], v[1], v[2]};
        if (kp.confidence > 0.0 && (kp.x < 0.0 || kp.x > 1.0 || kp.y < 0.0 || kp.y > 1.0)) {
            throw ConfigError("instance " + std::to_string(inst.id) + ": keypoint " + std::to_string(k) +
                              " outside [0,1]");
        }
    }
    if (j.contains("mask_path") && !j.at("mask_path").is_null()) {
        inst.mask_path = resolve(j.at("mask_path").get<std::string>(), base_dir);
    }
    if (j.contains("parts")) {
        for (const json& p : j.at("parts")) {
            PartSpec part{p.at("name").get<std::string>(), p.at("text").get<std::string>(), std::nullopt};
            if (p.contains("mask_path") && !p.at("mask_path").is_null()) {
                part.mask_path = resolve(p.at("mask_path").get<std::string>(), base_dir);
            }
            inst.parts.push_back(std::move(part));
        }
    }
    return inst;
}

}  // namespace

std::vector<StageConfig> default_stages(int count) { return std::vector<StageConfig>(static_cast<std::size_t>(count)); }

SceneDocument parse_scene(const std::string& text, const std::filesystem::path& base_dir) {
    SceneDocument doc;
    try {
        const json j = json::parse(text);
        const int version = j.value("scene_version", kSceneVersion);
        if (version != kSceneVersion) {
            throw ConfigError("unsupported scene_version " + std::to_string(version));
        }
        const json& canvas = j.at("canvas");
        doc.scene.canvas_w = canvas.at("width").get<int>();
        doc.scene.canvas_h = canvas.at("height").get<int>();
        read_opt(j, "base_res", doc.scene.base_res);
        read_opt(j, "global_text", doc.scene.global_text);
        read_opt(j, "background_text", doc.scene.background_text);
        if (j.contains("instances")) {
            for (const json& inst : j.at("instances")) {
                doc.scene.instances.push_back(parse_instance(inst, base_dir));
            }
        }
        if (j.contains("stages")) {
            for (const json& st : j.at("stages")) {
                doc.stages.push_back(parse_stage(st));
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene document: ") + e.what());
    }
    validate(doc.scene);
    for (const auto& st : doc.stages) {
        validate(st);
    }
    return doc;
}

SceneDocument load_scene(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read scene file " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_scene(buf.str(), path.parent_path());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string scene_to_json(const SceneDocument& doc) {
    json j;
    j["scene_version"] = kSceneVersion;
    j["canvas"] = {{"width", doc.scene.canvas_w}, {"height", doc.scene.canvas_h}};
    j["base_res"] = doc.scene.base_res;
    j["global_text"] = doc.scene.global_text;
    j["background_text"] = doc.scene.background_text;
    j["instances"] = json::array();
    for (const auto& inst : doc.scene.instances) {
        json kps = json::array();
        for (const auto& kp : inst.keypoints) {
            kps.push_back({kp.x, kp.y, kp.confidence});
        }
        json ji = {{"id", inst.id},
                   {"text", inst.text},
                   {"bbox", {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h}},
                   {"keypoints", kps}};
        if (inst.mask_path) {
            ji["mask_path"] = *inst.mask_path;
        }
        if (!inst.parts.empty()) {
            ji["parts"] = json::array();
            for (const auto& p : inst.parts) {
                json jp = {{"name", p.name}, {"text", p.text}};
                if (p.mask_path) {
                    jp["mask_path"] = *p.mask_path;
                }
                ji["parts"].push_back(jp);
            }
        }
        j["instances"].push_back(ji);
    }
    if (!doc.stages.empty()) {
        j["stages"] = json::array();
        for (const auto& st : doc.stages) {
            j["stages"].push_back(stage_to_json(st));
        }
    }
    return j.dump(2) + "\n";
}

}  // namespace sceneforge
