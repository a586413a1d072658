#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "sceneforge/bundle.hpp"
#include "sceneforge/png_io.hpp"
#include "sceneforge/scene_io.hpp"

using namespace sceneforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        std::random_device rd;
        path = fs::temp_directory_path() / ("sceneforge_io_" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::string scene_text(const std::string& instance_extra = "", const std::string& keypoints = "") {
    std::string kps = keypoints;
    if (kps.empty()) {
        for (int k = 0; k < 18; ++k) {
            kps += std::string(k ? "," : "") + "[0.5, 0.5, " + (k < 2 ? "1" : "0") + "]";
        }
    }
    return R"({"scene_version": 1, "canvas": {"width": 256, "height": 128}, "base_res": 128,
               "global_text": "g", "background_text": "b",
               "instances": [{"id": 4, "text": "a cook", "bbox": [10, 20, 50, 90], "keypoints": [)" +
           kps + "]" + instance_extra + "}]}";
}

}  // namespace

TEST_CASE("PNG round trip for gray and RGB") {
    TempDir tmp;
    std::mt19937_64 gen(3);
    const ImageBuffer gray = oracle::random_gray(gen, 37, 21);
    const ImageBuffer rgb = oracle::random_rgb(gen, 19, 40);
    write_png(tmp.path / "g.png", gray);
    write_png(tmp.path / "sub" / "c.png", rgb);
    CHECK(read_png(tmp.path / "g.png") == gray);
    CHECK(read_png(tmp.path / "sub" / "c.png") == rgb);

    // Same pixels, same bytes.
    write_png(tmp.path / "c2.png", rgb);
    CHECK(slurp(tmp.path / "sub" / "c.png") == slurp(tmp.path / "c2.png"));
}

TEST_CASE("PNG errors") {
    TempDir tmp;
    CHECK_THROWS_WITH_AS(read_png(tmp.path / "missing.png"), doctest::Contains("missing.png"), IoError);
    std::ofstream(tmp.path / "junk.png") << "not a png at all";
    CHECK_THROWS_AS(read_png(tmp.path / "junk.png"), IoError);
    CHECK_THROWS_AS(write_png(tmp.path / "e.png", ImageBuffer()), Error);
}

TEST_CASE("sha256 reference digests") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("bundles list every artifact with its hash, sorted") {
    TempDir tmp;
    const std::vector<Artifact> arts = {
        {"z/last.txt", std::string("tail")},
        {"a.png", ImageBuffer(4, 3, 3, 7)},
        {"m/notes.txt", std::string("abc")},
    };
    const auto entries = write_bundle(tmp.path / "out", arts);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].path == "a.png");
    CHECK(entries[1].path == "m/notes.txt");
    CHECK(entries[2].path == "z/last.txt");
    CHECK(entries[1].sha256 == sha256_hex("abc"));
    CHECK(entries[1].bytes == 3);
    CHECK(entries[0].sha256 == sha256_file(tmp.path / "out" / "a.png"));
    CHECK(read_manifest(tmp.path / "out" / "manifest.json") == entries);
    CHECK(read_png(tmp.path / "out" / "a.png") == ImageBuffer(4, 3, 3, 7));

    const auto again = write_bundle(tmp.path / "out2", arts);
    CHECK(again == entries);
    CHECK(slurp(tmp.path / "out" / "manifest.json") == slurp(tmp.path / "out2" / "manifest.json"));
    CHECK_THROWS_AS(read_manifest(tmp.path / "nope.json"), IoError);
}

TEST_CASE("scene documents parse and round-trip") {
    const SceneDocument doc = parse_scene(scene_text(R"(, "parts": [{"name": "head", "text": "a white hat"}])"));
    CHECK(doc.scene.canvas_w == 256);
    CHECK(doc.scene.canvas_h == 128);
    CHECK(doc.scene.base_res == 128);
    REQUIRE(doc.scene.instances.size() == 1);
    const InstanceSpec& inst = doc.scene.instances[0];
    CHECK(inst.id == 4);
    CHECK(inst.bbox == PixelRect{10, 20, 50, 90});
    CHECK(inst.keypoints[1].confidence == 1.0);
    CHECK(inst.keypoints[5].confidence == 0.0);
    REQUIRE(inst.parts.size() == 1);
    CHECK(inst.parts[0].text == "a white hat");
    CHECK(doc.stages.empty());

    const SceneDocument back = parse_scene(scene_to_json(doc));
    CHECK(scene_to_json(back) == scene_to_json(doc));

    const SceneDocument sample = load_scene(std::string(SCENEFORGE_SOURCE_DIR) + "/data/sample_scene.json");
    CHECK(sample.scene.canvas_w == 1024);
    CHECK_FALSE(sample.scene.instances.empty());
}

TEST_CASE("stages in the scene document") {
    std::string text = scene_text();
    text.pop_back();
    text += R"(, "stages": [{"alpha_interp": 2, "t_b": 600, "steps": 20,
                             "stride": {"view": 64, "s_back": 32, "s_inst": 16, "beta_over": 0.3},
                             "perturb": {"d_r": 2, "p_max": 0.2, "flip_inequality": true}}, {}]})";
    const SceneDocument doc = parse_scene(text);
    REQUIRE(doc.stages.size() == 2);
    const StageConfig& s = doc.stages[0];
    CHECK(s.t_b == 600);
    CHECK(s.steps == 20);
    CHECK(s.stride == StrideParams{64, 64, 32, 16, 0.3});
    CHECK(s.perturb.d_r == 2);
    CHECK(s.perturb.p_max == 0.2);
    CHECK(s.perturb.flip_inequality);
    CHECK(s.perturb.p_base == 0.005);
    CHECK(doc.stages[1].t_b == 700);
    CHECK(parse_scene(scene_to_json(doc)).stages.size() == 2);
}

TEST_CASE("relative mask paths resolve against the scene directory") {
    const SceneDocument doc = parse_scene(scene_text(R"(, "mask_path": "masks/cook.png")"), "/data/scenes");
    REQUIRE(doc.scene.instances[0].mask_path);
    CHECK(*doc.scene.instances[0].mask_path == "/data/scenes/masks/cook.png");
    const SceneDocument abs = parse_scene(scene_text(R"(, "mask_path": "/abs/m.png")"), "/data/scenes");
    CHECK(*abs.scene.instances[0].mask_path == "/abs/m.png");
}

TEST_CASE("scene errors") {
    CHECK_THROWS_WITH_AS(parse_scene("{"), doctest::Contains("scene document"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_scene(R"({"scene_version": 2, "canvas": {"width": 8, "height": 8}})"),
                         doctest::Contains("scene_version"), ConfigError);
    CHECK_THROWS_AS(parse_scene(R"({"instances": []})"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_scene(scene_text("", "[0.5, 0.5, 1]")), doctest::Contains("18 entries"),
                         ConfigError);
    std::string far;
    for (int k = 0; k < 18; ++k) {
        far += std::string(k ? "," : "") + (k == 3 ? "[1.5, 0.5, 1]" : "[0.5, 0.5, 1]");
    }
    CHECK_THROWS_WITH_AS(parse_scene(scene_text("", far)), doctest::Contains("keypoint 3 outside"), ConfigError);
    std::string text = scene_text();
    text.replace(text.find("[10, 20, 50, 90]"), 16, "[10, 20, 50]");
    CHECK_THROWS_WITH_AS(parse_scene(text), doctest::Contains("bbox"), ConfigError);
    text = scene_text();
    text.replace(text.find("[10, 20, 50, 90]"), 16, "[230, 20, 50, 90]");
    CHECK_THROWS_WITH_AS(parse_scene(text), doctest::Contains("placement overflow"), ConfigError);
    CHECK_THROWS_WITH_AS(load_scene("/no/such/scene.json"), doctest::Contains("/no/such/scene.json"), IoError);
}
