#include "featrestore/femb.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace featrestore {

using nlohmann::json;

std::string manifest_path(const std::string& femb_path) {
    std::filesystem::path p(femb_path);
    p.replace_extension(".jsonl");
    return p.string();
}

namespace {

constexpr Modality kModalities[] = {Modality::image, Modality::text};

int dim_of(const Dataset& data, Modality m) { return m == Modality::image ? data.d_image : data.d_text; }

}  // namespace

std::vector<std::uint8_t> encode_femb(const Dataset& data) {
    ByteWriter out;
    out.bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("FEMB"), 4));
    out.u16(kFembVersion);
    out.u16(2);

    ByteWriter header;
    for (Modality m : kModalities) {
        header.str(to_string(m));
        header.u32(static_cast<std::uint32_t>(dim_of(data, m)));
    }
    header.u64(data.samples.size());
    write_section(out, "header", header.data());

    for (Modality m : kModalities) {
        const int d = dim_of(data, m);
        ByteWriter payload;
        std::uint64_t rows = 0;
        for (const auto& s : data.samples) rows += s.has(m) ? 1 : 0;
        payload.u64(rows);
        for (const auto& s : data.samples) {
            if (!s.has(m)) continue;
            const Vector& v = s.feature(m);
            if (v.size() != d) {
                throw FormatError("sample '" + s.id + "': " + to_string(m) + " dimension " +
                                  std::to_string(v.size()) + " != " + std::to_string(d));
            }
            for (Eigen::Index j = 0; j < d; ++j) payload.f32(static_cast<float>(v(j)));
        }
        write_section(out, to_string(m), payload.data());
    }
    return out.take();
}

std::string encode_manifest(const Dataset& data) {
    std::ostringstream os;
    json header = {{"format", "FEMB"},
                   {"version", kFembVersion},
                   {"count", data.samples.size()},
                   {"n_classes", data.n_classes},
                   {"d_feature", {{"image", data.d_image}, {"text", data.d_text}}}};
    os << header.dump() << '\n';
    for (const auto& s : data.samples) {
        s.validate();
        json rec = {{"id", s.id},
                    {"label", s.label},
                    {"availability", to_string(s.availability)},
                    {"restored", {{"image", s.image_restored}, {"text", s.text_restored}}}};
        os << rec.dump() << '\n';
    }
    return os.str();
}

Dataset decode_femb(const std::vector<std::uint8_t>& bytes, const std::string& manifest) {
    ByteReader in(bytes, "FEMB");
    auto magic = in.bytes(4);
    if (std::string(magic.begin(), magic.end()) != "FEMB") {
        throw FormatError("FEMB: bad magic");
    }
    const std::uint16_t version = in.u16();
    if (version != kFembVersion) {
        throw FormatError("FEMB: unsupported version " + std::to_string(version));
    }
    if (in.u16() != 2) {
        throw FormatError("FEMB: expected 2 modalities");
    }

    auto header_bytes = read_section(in, "header");
    ByteReader header(header_bytes, "FEMB section 'header'");
    int dims[2] = {0, 0};
    for (int i = 0; i < 2; ++i) {
        const std::string name = header.str();
        if (name != to_string(kModalities[i])) {
            throw FormatError("FEMB section 'header': unexpected modality '" + name + "'");
        }
        dims[i] = static_cast<int>(header.u32());
    }
    const std::uint64_t count = header.u64();

    // Manifest.
    std::istringstream ms(manifest);
    std::string line;
    if (!std::getline(ms, line)) {
        throw FormatError("manifest: empty");
    }
    Dataset data;
    json mh = json::parse(line);
    if (mh.value("format", "") != "FEMB") {
        throw FormatError("manifest: not a FEMB manifest");
    }
    data.d_image = mh.at("d_feature").at("image").get<int>();
    data.d_text = mh.at("d_feature").at("text").get<int>();
    data.n_classes = mh.value("n_classes", 0);
    if (data.d_image != dims[0] || data.d_text != dims[1]) {
        throw FormatError("dimension mismatch: manifest declares image/text d_feature " +
                          std::to_string(data.d_image) + "/" + std::to_string(data.d_text) +
                          " but container holds " + std::to_string(dims[0]) + "/" + std::to_string(dims[1]));
    }
    if (mh.at("count").get<std::uint64_t>() != count) {
        throw FormatError("manifest: sample count disagrees with container header");
    }
    while (std::getline(ms, line)) {
        if (line.empty()) continue;
        json r = json::parse(line);
        SamplePair s;
        s.id = r.at("id").get<std::string>();
        s.label = r.at("label").get<int>();
        s.availability = availability_from_string(r.at("availability").get<std::string>());
        if (r.contains("restored")) {
            s.image_restored = r["restored"].value("image", false);
            s.text_restored = r["restored"].value("text", false);
        }
        data.samples.push_back(std::move(s));
    }
    if (data.samples.size() != count) {
        throw FormatError("manifest: expected " + std::to_string(count) + " records, found " +
                          std::to_string(data.samples.size()));
    }

    for (int i = 0; i < 2; ++i) {
        const Modality m = kModalities[i];
        const std::string name = to_string(m);
        auto payload = read_section(in, name);
        ByteReader sec(payload, "FEMB section '" + name + "'");
        const std::uint64_t rows = sec.u64();
        std::uint64_t expected = 0;
        for (const auto& s : data.samples) {
            expected += s.availability == Availability::complete ||
                                (m == Modality::image ? s.availability == Availability::image_only
                                                      : s.availability == Availability::text_only)
                            ? 1
                            : 0;
        }
        if (rows != expected) {
            throw FormatError("FEMB section '" + name + "': " + std::to_string(rows) +
                              " rows but manifest expects " + std::to_string(expected));
        }
        if (sec.remaining() != rows * static_cast<std::uint64_t>(dims[i]) * 4) {
            throw FormatError("dimension mismatch in FEMB section '" + name + "': payload size " +
                              "does not equal rows x d_feature x 4");
        }
        for (auto& s : data.samples) {
            const bool present = s.availability == Availability::complete ||
                                 (m == Modality::image ? s.availability == Availability::image_only
                                                       : s.availability == Availability::text_only);
            if (!present) continue;
            Vector v(dims[i]);
            for (int j = 0; j < dims[i]; ++j) v(j) = static_cast<double>(sec.f32());
            (m == Modality::image ? s.image : s.text) = std::move(v);
        }
    }
    if (in.remaining() != 0) {
        throw FormatError("FEMB: trailing bytes after last section");
    }
    return data;
}

void write_embeddings(const Dataset& data, const std::string& path) {
    const auto bytes = encode_femb(data);
    const std::string manifest = encode_manifest(data);
    write_file(path, bytes);
    std::ofstream mf(manifest_path(path), std::ios::binary | std::ios::trunc);
    if (!mf) throw std::runtime_error("cannot write " + manifest_path(path));
    mf << manifest;
}

Dataset read_embeddings(const std::string& path) {
    const auto bytes = read_file(path);
    std::ifstream mf(manifest_path(path), std::ios::binary);
    if (!mf) throw std::runtime_error("cannot open manifest " + manifest_path(path));
    std::stringstream ss;
    ss << mf.rdbuf();
    return decode_femb(bytes, ss.str());
}

}  // namespace featrestore
