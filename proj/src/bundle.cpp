#include "sceneforge/bundle.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "sceneforge/png_io.hpp"

namespace sceneforge {

namespace {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
            throw Error("sha256: digest init failed");
        }
    }

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_.get(), digest.data(), &len);
        std::ostringstream out;
        for (unsigned int i = 0; i < len; ++i) {
            out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
        }
        return out.str();
    }

private:
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_hex(std::string_view data) {
    Sha256 h;
    h.update(data.data(), data.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::vector<ManifestEntry> write_bundle(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
    std::vector<ManifestEntry> entries;
    for (const Artifact& a : artifacts) {
        const auto path = dir / a.name;
        if (const auto* img = std::get_if<ImageBuffer>(&a.content)) {
            write_png(path, *img);
        } else {
            std::filesystem::create_directories(path.parent_path(), ec);
            std::ofstream out(path, std::ios::binary);
            const auto& text = std::get<std::string>(a.content);
            out.write(text.data(), static_cast<std::streamsize>(text.size()));
            if (!out) {
                throw IoError("cannot write " + path.string());
            }
        }
        entries.push_back({a.name, sha256_file(path), std::filesystem::file_size(path)});
    }
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.path < y.path; });

    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& e : entries) {
        manifest.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
    }
    std::ofstream out(dir / "manifest.json");
    out << nlohmann::json{{"manifest_version", 1}, {"artifacts", manifest}}.dump(2) << "\n";
    if (!out) {
        throw IoError("cannot write manifest in " + dir.string());
    }
    return entries;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot read " + manifest_path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path.string() + ": " + e.what());
    }
    std::vector<ManifestEntry> entries;
    for (const auto& item : doc.at("artifacts")) {
        entries.push_back({item.at("path").get<std::string>(), item.at("sha256").get<std::string>(),
                           item.at("bytes").get<std::uintmax_t>()});
    }
    return entries;
}

}  // namespace sceneforge
