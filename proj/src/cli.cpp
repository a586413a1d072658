#include "sceneforge/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sceneforge/bundle.hpp"
#include "sceneforge/png_io.hpp"
#include "sceneforge/remote_backend.hpp"
#include "sceneforge/scene_io.hpp"

namespace sceneforge {

namespace {

// Values from the config file; flags given on the command line replace them.
struct Settings {
    std::uint64_t seed = 0;
    std::string out = "sceneforge_out";
    std::string backend = "toy";
    std::string endpoint;
    std::optional<int> stages;
    std::optional<int> stride_back;
    std::optional<int> stride_inst;
    std::optional<double> beta_over;
    std::optional<int> t_b;
    std::optional<int> steps;
    std::optional<bool> flip;
    int view = 128;
    int workers = 1;
    bool tone_each_stage = false;
    bool use_parts = false;
};

Settings load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config file " + path);
    }
    Settings s;
    try {
        nlohmann::json j;
        in >> j;
        const int version = j.value("config_version", -1);
        if (version != kConfigVersion) {
            throw ConfigError(path + ": config_version must be " + std::to_string(kConfigVersion));
        }
        s.seed = j.value("seed", s.seed);
        s.out = j.value("out", s.out);
        s.backend = j.value("backend", s.backend);
        s.endpoint = j.value("endpoint", s.endpoint);
        if (j.contains("stages")) s.stages = j.at("stages").get<int>();
        if (j.contains("stride_back")) s.stride_back = j.at("stride_back").get<int>();
        if (j.contains("stride_inst")) s.stride_inst = j.at("stride_inst").get<int>();
        if (j.contains("beta_over")) s.beta_over = j.at("beta_over").get<double>();
        if (j.contains("t_b")) s.t_b = j.at("t_b").get<int>();
        if (j.contains("steps")) s.steps = j.at("steps").get<int>();
        if (j.contains("flip_perturb_inequality")) s.flip = j.at("flip_perturb_inequality").get<bool>();
        s.view = j.value("view", s.view);
        s.workers = j.value("workers", s.workers);
        s.tone_each_stage = j.value("tone_each_stage", s.tone_each_stage);
        s.use_parts = j.value("use_parts", s.use_parts);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return s;
}

// Raw flag storage plus the option handles needed to tell whether a flag was given.
struct Flags {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    std::string backend;
    std::string endpoint;
    int stages = 0;
    int stride_back = 0;
    int stride_inst = 0;
    double beta_over = 0.0;
    int t_b = 0;
    int steps = 0;
    bool flip = false;
    int view = 0;
    int workers = 0;
    bool tone_each_stage = false;
    bool use_parts = false;
    std::map<std::string, CLI::Option*> opts;

    bool given(const std::string& name) const {
        auto it = opts.find(name);
        return it != opts.end() && it->second->count() > 0;
    }
};

void add_common(CLI::App& app, Flags& f) {
    f.opts["config"] = app.add_option("--config", f.config, "JSON config file (config_version 1)");
    f.opts["seed"] = app.add_option("--seed", f.seed, "Random seed");
    f.opts["out"] = app.add_option("--out", f.out, "Output directory");
}

void add_stage_flags(CLI::App& app, Flags& f) {
    f.opts["stages"] = app.add_option("--stages", f.stages, "Number of enlargement stages")->check(CLI::NonNegativeNumber);
    f.opts["stride-back"] = app.add_option("--stride-back", f.stride_back, "Background stride (latent cells)");
    f.opts["stride-inst"] = app.add_option("--stride-inst", f.stride_inst, "Instance stride (latent cells)");
    f.opts["beta-over"] = app.add_option("--beta-over", f.beta_over, "Instance overlap threshold");
    f.opts["tb"] = app.add_option("--tb", f.t_b, "Forward-diffusion timestep per stage");
    f.opts["steps"] = app.add_option("--steps", f.steps, "Sampling steps per stage");
    f.opts["flip"] = app.add_flag("--flip-perturb-inequality", f.flip, "Replace pixels when eps < C");
    f.opts["view"] = app.add_option("--view", f.view, "Denoiser view size (latent cells)");
}

void add_backend_flags(CLI::App& app, Flags& f) {
    f.opts["backend"] = app.add_option("--backend", f.backend, "toy | oracle | remote")
                            ->check(CLI::IsMember({"toy", "oracle", "remote"}));
    f.opts["endpoint"] = app.add_option("--endpoint", f.endpoint, "host:port of a remote backend");
    f.opts["workers"] = app.add_option("--workers", f.workers, "Threads for concurrent backends");
    f.opts["tone-each-stage"] = app.add_flag("--tone-each-stage", f.tone_each_stage, "Tone-normalize every stage");
    f.opts["use-parts"] = app.add_flag("--use-parts", f.use_parts, "Append part-level prompts");
}

Settings resolve(const Flags& f) {
    Settings s = f.given("config") ? load_config(f.config) : Settings{};
    if (f.given("seed")) s.seed = f.seed;
    if (f.given("out")) s.out = f.out;
    if (f.given("backend")) s.backend = f.backend;
    if (const char* env = std::getenv(kEndpointEnv); env != nullptr && *env != '\0') s.endpoint = env;
    if (f.given("endpoint")) s.endpoint = f.endpoint;
    if (f.given("stages")) s.stages = f.stages;
    if (f.given("stride-back")) s.stride_back = f.stride_back;
    if (f.given("stride-inst")) s.stride_inst = f.stride_inst;
    if (f.given("beta-over")) s.beta_over = f.beta_over;
    if (f.given("tb")) s.t_b = f.t_b;
    if (f.given("steps")) s.steps = f.steps;
    if (f.given("flip")) s.flip = f.flip;
    if (f.given("view")) s.view = f.view;
    if (f.given("workers")) s.workers = f.workers;
    if (f.given("tone-each-stage")) s.tone_each_stage = f.tone_each_stage;
    if (f.given("use-parts")) s.use_parts = f.use_parts;
    return s;
}

void apply_overrides(StageConfig& c, const Settings& s, int view) {
    c.stride.view_h = c.stride.view_w = view;
    if (s.stride_back) c.stride.s_back = *s.stride_back;
    if (s.stride_inst) c.stride.s_inst = *s.stride_inst;
    if (s.beta_over) c.stride.beta_over = *s.beta_over;
    if (s.t_b) c.t_b = *s.t_b;
    if (s.steps) c.steps = *s.steps;
    if (s.flip) c.perturb.flip_inequality = *s.flip;
}

std::vector<StageConfig> stage_list(const SceneDocument& doc, const Settings& s, int view) {
    std::vector<StageConfig> stages = doc.stages.empty() ? default_stages(2) : doc.stages;
    if (s.stages) {
        const auto n = static_cast<std::size_t>(*s.stages);
        const StageConfig fill = stages.empty() ? StageConfig{} : stages.back();
        stages.resize(n, fill);
    }
    for (auto& c : stages) {
        apply_overrides(c, s, view);
        validate(c);
    }
    return stages;
}

struct Backends {
    BackendSet set;
    int view = 128;
};

Backends select_backends(const Settings& s) {
    Backends b;
    if (s.backend == "toy") {
        b.view = s.view;
        b.set = make_toy_backends(s.view);
    } else if (s.backend == "oracle") {
        b.view = s.view;
        b.set = make_oracle_backends(s.view);
    } else if (s.backend == "remote") {
        if (s.endpoint.empty()) {
            throw ConfigError(std::string("remote backend needs --endpoint or ") + kEndpointEnv);
        }
        auto session = RemoteSession::open(wire::parse_endpoint(s.endpoint));
        if (session->info().view_h != session->info().view_w) {
            throw ConfigError("remote backend view must be square");
        }
        b.view = session->info().view_h;
        b.set = make_remote_backends(session, s.steps.value_or(50));
    } else {
        throw ConfigError("unknown backend '" + s.backend + "'");
    }
    return b;
}

int cmd_generate(const std::string& scene_path, const Flags& flags, std::ostream& out, std::ostream& err) {
    const Settings s = resolve(flags);
    const SceneDocument doc = load_scene(scene_path);
    Backends b = select_backends(s);
    const std::vector<StageConfig> stages = stage_list(doc, s, b.view);
    const int expected = b.view * b.set.codec->factor();
    if (doc.scene.base_res != expected) {
        throw ConfigError("base_res " + std::to_string(doc.scene.base_res) + " must equal view x codec factor = " +
                          std::to_string(expected));
    }
    PipelineOptions opts;
    opts.seed = s.seed;
    opts.workers = s.workers;
    opts.tone_each_stage = s.tone_each_stage;
    opts.conditioning.use_parts = s.use_parts;
    opts.log = [&err](const std::string& msg) { err << msg << "\n"; };
    const RunResult result = run(doc.scene, stages, b.set, opts);
    const auto entries = write_bundle(s.out, result.artifacts);
    out << "final " << result.final_image.width() << "x" << result.final_image.height() << "\n";
    out << "manifest " << (std::filesystem::path(s.out) / "manifest.json").string() << "\n";
    for (const auto& e : entries) {
        out << e.sha256 << "  " << e.path << "\n";
    }
    return kExitOk;
}

struct ScheduleFlags {
    int latent_h = 64;
    int latent_w = 64;
    std::string mask;
    int factor = 8;
};

int cmd_schedule(const ScheduleFlags& sf, const Flags& flags, std::ostream& out) {
    const Settings s = resolve(flags);
    StrideParams p;
    p.view_h = p.view_w = s.view;
    if (s.stride_back) p.s_back = *s.stride_back;
    if (s.stride_inst) p.s_inst = *s.stride_inst;
    if (s.beta_over) p.beta_over = *s.beta_over;
    validate_stride(sf.latent_h, sf.latent_w, p);
    std::vector<LatentMask> masks;
    if (!sf.mask.empty()) {
        const ImageBuffer img = read_png(sf.mask);
        const BinaryMask m = mask_from_image(img.channels() == 1 ? img : to_gray(img));
        if (m.height() == sf.latent_h && m.width() == sf.latent_w) {
            masks.push_back(m);
        } else if (m.height() == sf.latent_h * sf.factor && m.width() == sf.latent_w * sf.factor) {
            masks.push_back(downscale_mask(m, sf.factor));
        } else {
            throw ConfigError("mask " + sf.mask + " matches neither the latent grid nor latent x " +
                              std::to_string(sf.factor));
        }
    }
    const AdaptiveSchedule sched = adaptive_views(sf.latent_h, sf.latent_w, p, masks);
    const std::string text = format_schedule(sched, sf.latent_h, sf.latent_w, p);
    out << text;
    write_bundle(s.out, {{"schedule.txt", text},
                         {"coverage.png", coverage_heatmap(coverage_counts(sched.views, sf.latent_h, sf.latent_w))}});
    return kExitOk;
}

struct PerturbFlags {
    int alpha = 2;
    int d_r = 4;
    double sigma = 50.0;
    double p_max = 0.1;
    double p_base = 0.005;
    double canny_lo = 100.0;
    double canny_hi = 200.0;
};

int cmd_perturb(const std::string& image_path, const PerturbFlags& pf, const Flags& flags, std::ostream& out) {
    const Settings s = resolve(flags);
    PerturbParams p;
    p.alpha_interp = pf.alpha;
    p.d_r = pf.d_r;
    p.sigma = pf.sigma;
    p.p_max = pf.p_max;
    p.p_base = pf.p_base;
    p.canny_lo = pf.canny_lo;
    p.canny_hi = pf.canny_hi;
    p.flip_inequality = s.flip.value_or(false);
    validate(p);
    ImageBuffer img = read_png(image_path);
    const ProbabilityMap map = build_probability_map(img, p);
    Rng rng(s.seed);
    const PerturbResult res = adaptive_pixel_perturb(img, map, p, rng);
    double expected = 0.0;
    for (double c : map.values.values()) {
        expected += p.flip_inequality ? c : 1.0 - c;
    }
    const double n = static_cast<double>(map.values.values().size());
    write_bundle(s.out, {{"perturbed.png", res.image}, {"probability_map.png", probability_image(map, p.p_max)}});
    out << "output " << res.image.width() << "x" << res.image.height() << "\n";
    out << "replaced " << res.replaced << " of " << static_cast<std::size_t>(n) << " ("
        << static_cast<double>(res.replaced) / n << "), expected fraction " << expected / n << "\n";
    return kExitOk;
}

struct FlopsFlags {
    double view_cost = 1.0;
    double encode_cost = 0.0;
    double decode_cost = 0.0;
};

int cmd_flops(const std::string& scene_path, const FlopsFlags& ff, const Flags& flags, std::ostream& out) {
    const Settings s = resolve(flags);
    const SceneDocument doc = load_scene(scene_path);
    const std::vector<StageConfig> stages = stage_list(doc, s, s.view);
    const FlopsModel model{ff.view_cost, ff.encode_cost, ff.decode_cost};
    const auto workloads = plan_workloads(doc.scene, stages, 8);
    out << estimate_flops(workloads, model).to_text();
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Instance-aware hierarchical scene enlargement"};
    app.require_subcommand(1);

    Flags gen_flags;
    std::string gen_scene;
    auto* gen = app.add_subcommand("generate", "Compose the base image and run enlargement stages");
    gen->add_option("scene", gen_scene, "Scene JSON")->required();
    add_common(*gen, gen_flags);
    add_stage_flags(*gen, gen_flags);
    add_backend_flags(*gen, gen_flags);

    Flags sch_flags;
    ScheduleFlags sch;
    auto* schedule = app.add_subcommand("schedule", "Dump an adaptive view schedule and its coverage heatmap");
    schedule->add_option("--latent-h", sch.latent_h, "Latent height")->check(CLI::PositiveNumber);
    schedule->add_option("--latent-w", sch.latent_w, "Latent width")->check(CLI::PositiveNumber);
    schedule->add_option("--mask", sch.mask, "Instance mask PNG (latent or pixel grid)");
    schedule->add_option("--mask-factor", sch.factor, "Pixels per latent cell for pixel-grid masks");
    add_common(*schedule, sch_flags);
    add_stage_flags(*schedule, sch_flags);

    Flags per_flags;
    PerturbFlags pf;
    std::string per_image;
    auto* perturb = app.add_subcommand("perturb", "Edge-aware pixel perturbation of an image");
    perturb->add_option("image", per_image, "Input PNG")->required();
    perturb->add_option("--alpha", pf.alpha, "Upsampling factor")->check(CLI::PositiveNumber);
    perturb->add_option("--dr", pf.d_r, "Max replacement offset");
    perturb->add_option("--sigma", pf.sigma, "Edge blur sigma");
    perturb->add_option("--p-max", pf.p_max, "Threshold on edges");
    perturb->add_option("--p-base", pf.p_base, "Threshold away from edges");
    perturb->add_option("--canny-lo", pf.canny_lo, "Canny low threshold");
    perturb->add_option("--canny-hi", pf.canny_hi, "Canny high threshold");
    add_common(*perturb, per_flags);
    per_flags.opts["flip"] = perturb->add_flag("--flip-perturb-inequality", per_flags.flip, "Replace when eps < C");

    Flags fl_flags;
    FlopsFlags ff;
    std::string fl_scene;
    auto* flops = app.add_subcommand("flops", "Estimate denoiser cost per stride policy");
    flops->add_option("scene", fl_scene, "Scene JSON")->required();
    flops->add_option("--view-cost", ff.view_cost, "Cost per view per sampling step");
    flops->add_option("--encode-cost", ff.encode_cost, "Encoder cost per pixel");
    flops->add_option("--decode-cost", ff.decode_cost, "Decoder cost per pixel");
    add_common(*flops, fl_flags);
    add_stage_flags(*flops, fl_flags);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (gen->parsed()) {
            return cmd_generate(gen_scene, gen_flags, out, err);
        }
        if (schedule->parsed()) {
            return cmd_schedule(sch, sch_flags, out);
        }
        if (perturb->parsed()) {
            return cmd_perturb(per_image, pf, per_flags, out);
        }
        if (flops->parsed()) {
            return cmd_flops(fl_scene, ff, fl_flags, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitBackend;
    }
    return kExitConfig;
}

}  // namespace sceneforge
