#include "listen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <openssl/evp.h>

#include "listen/errors.hpp"

namespace listen::ckpt {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'L', 'S', 'T', 'N', 'A', 'R', 'R', '1'};

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw Error("sha256 init failed", kExitData);
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_, data, n); }

    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        EVP_DigestFinal_ex(ctx_, md, &len);
        static constexpr char kHex[] = "0123456789abcdef";
        std::string out;
        for (unsigned int i = 0; i < len; ++i) {
            out.push_back(kHex[md[i] >> 4]);
            out.push_back(kHex[md[i] & 15]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace

Mat to_f32_precision(const Mat& m) { return m.cast<float>().cast<double>(); }

void save(const std::filesystem::path& path, const ArrayStore& store) {
    nlohmann::json header = nlohmann::json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : store.arrays) {
        if (name == "__metadata__") throw ArgumentError("reserved array name");
        header[name] = {{"dtype", "f32"}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}};
        offset += static_cast<std::uint64_t>(m.size()) * 4;
    }
    header["__metadata__"] = store.metadata;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kMagic, 8);
    const std::uint64_t hlen = text.size();
    out.write(reinterpret_cast<const char*>(&hlen), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : store.arrays) {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.cast<float>();
        out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * 4));
    }
    if (!out) throw DataError("short write to " + path.string());
}

ArrayStore load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    char magic[8];
    std::uint64_t hlen = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw FormatError(path.string() + ": not a named-array container");
    std::string text(hlen, '\0');
    in.read(text.data(), static_cast<std::streamsize>(hlen));
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ArrayStore store;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad header: " + e.what());
    }
    for (const auto& [name, info] : header.items()) {
        if (name == "__metadata__") {
            store.metadata = info;
            continue;
        }
        if (info.at("dtype").get<std::string>() != "f32") throw FormatError(name + ": unsupported dtype");
        const auto rows = info.at("shape").at(0).get<Eigen::Index>();
        const auto cols = info.at("shape").at(1).get<Eigen::Index>();
        const auto offset = info.at("offset").get<std::size_t>();
        const auto bytes = static_cast<std::size_t>(rows * cols) * 4;
        if (offset + bytes > data.size()) throw FormatError(path.string() + ": array '" + name + "' out of bounds");
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
        std::memcpy(f.data(), data.data() + offset, bytes);
        store.arrays[name] = f.cast<double>();
    }
    return store;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_hex(const std::string& text) {
    Sha256 h;
    h.update(text.data(), text.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    Sha256 h;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

std::string array_digest(const Mat& m) {
    Sha256 h;
    const std::uint64_t shape[2] = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    h.update(shape, sizeof shape);
    h.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return h.hex();
}

std::map<std::string, std::string> digest_each(const std::map<std::string, Mat>& arrays) {
    std::map<std::string, std::string> out;
    for (const auto& [name, m] : arrays) out[name] = array_digest(m);
    return out;
}

std::string digest_all(const std::map<std::string, Mat>& arrays) {
    Sha256 h;
    for (const auto& [name, m] : arrays) {
        const std::string d = array_digest(m);
        h.update(name.data(), name.size());
        h.update("\0", 1);
        h.update(d.data(), d.size());
    }
    return h.hex();
}

}  // namespace listen::ckpt
