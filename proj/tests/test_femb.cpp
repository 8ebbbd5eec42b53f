#include "featrestore/femb.hpp"
#include "featrestore/rng.hpp"

#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <string>

using namespace featrestore;
namespace fs = std::filesystem;

namespace {

Dataset mixed_dataset() {
    Rng rng(3);
    Dataset d;
    d.d_image = 4;
    d.d_text = 3;
    d.n_classes = 2;
    const Availability kinds[] = {Availability::complete, Availability::image_only, Availability::text_only};
    for (int i = 0; i < 9; ++i) {
        SamplePair s;
        s.id = "s" + std::to_string(i);
        s.label = i % 2;
        s.availability = kinds[i % 3];
        if (s.availability != Availability::text_only) s.image = rng.normal_vector(4);
        if (s.availability != Availability::image_only) s.text = rng.normal_vector(3);
        s.text_restored = i == 0;
        d.samples.push_back(s);
    }
    return d;
}

/// Offset of the first payload byte of a named section. Modality names also
/// occur inside the header payload, so the last match is the section name.
std::size_t payload_offset(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    for (std::size_t i = bytes.size() - 4 - name.size() + 1; i-- > 0;) {
        std::uint32_t len = 0;
        std::memcpy(&len, &bytes[i], 4);
        if (len == name.size() && std::memcmp(&bytes[i + 4], name.data(), name.size()) == 0) {
            return i + 4 + name.size() + 8;
        }
    }
    FAIL("section not found");
    return 0;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("femb_test_" + std::to_string(Rng(std::random_device{}()).uniform_int(1ull << 40)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("femb") {

TEST_CASE("decode inverts encode up to float32 rounding") {
    const Dataset d = mixed_dataset();
    const Dataset back = decode_femb(encode_femb(d), encode_manifest(d));
    REQUIRE(back.size() == d.size());
    CHECK(back.d_image == 4);
    CHECK(back.d_text == 3);
    CHECK(back.n_classes == 2);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& a = d.samples[i];
        const auto& b = back.samples[i];
        CHECK(a.id == b.id);
        CHECK(a.label == b.label);
        CHECK(a.availability == b.availability);
        CHECK(a.text_restored == b.text_restored);
        CHECK(a.image.has_value() == b.image.has_value());
        CHECK(a.text.has_value() == b.text.has_value());
        if (a.image) {
            for (int j = 0; j < 4; ++j) CHECK((*b.image)(j) == static_cast<double>(static_cast<float>((*a.image)(j))));
        }
    }
}

TEST_CASE("write, read, write is byte-identical on disk") {
    TempDir tmp;
    const std::string p1 = (tmp.path / "one.femb").string();
    const std::string p2 = (tmp.path / "two.femb").string();
    write_embeddings(mixed_dataset(), p1);
    write_embeddings(read_embeddings(p1), p2);
    CHECK(read_file(p1) == read_file(p2));
    CHECK(read_file(manifest_path(p1)) == read_file(manifest_path(p2)));
    CHECK(manifest_path(p1) == (tmp.path / "one.jsonl").string());
}

TEST_CASE("corrupted sections are rejected by name") {
    const Dataset d = mixed_dataset();
    const std::string manifest = encode_manifest(d);
    for (const std::string name : {"header", "image", "text"}) {
        auto bytes = encode_femb(d);
        bytes[payload_offset(bytes, name) + 1] ^= 0x40;
        CAPTURE(name);
        try {
            decode_femb(bytes, manifest);
            FAIL("corruption was not detected");
        } catch (const FormatError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("'" + name + "'") != std::string::npos);
            CHECK(msg.find("CRC") != std::string::npos);
        }
    }
}

TEST_CASE("manifest and container disagreements are rejected") {
    const Dataset d = mixed_dataset();
    const auto bytes = encode_femb(d);
    std::string manifest = encode_manifest(d);

    std::string wrong_dim = manifest;
    wrong_dim.replace(wrong_dim.find("\"image\":4"), 9, "\"image\":5");
    CHECK_THROWS_WITH_AS(decode_femb(bytes, wrong_dim), doctest::Contains("dimension mismatch"), FormatError);

    std::string short_manifest = manifest.substr(0, manifest.rfind('\n', manifest.size() - 2) + 1);
    CHECK_THROWS_AS(decode_femb(bytes, short_manifest), FormatError);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(decode_femb(bad_magic, manifest), doctest::Contains("magic"), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(decode_femb(truncated, manifest), FormatError);
}

TEST_CASE("features with the wrong width are refused at write time") {
    Dataset d = mixed_dataset();
    d.samples[0].image = Vector::Zero(5);
    CHECK_THROWS_AS(encode_femb(d), FormatError);
}

TEST_CASE("reads a file produced by an independent encoder") {
    const std::string path = std::string(FEATRESTORE_FIXTURES) + "/interop.femb";
    const Dataset d = read_embeddings(path);
    REQUIRE(d.size() == 3);
    CHECK(d.d_image == 2);
    CHECK(d.d_text == 3);
    CHECK(d.n_classes == 3);
    CHECK(d.samples[0].availability == Availability::complete);
    CHECK((*d.samples[0].image)(1) == -1.25);
    CHECK((*d.samples[0].text)(2) == -0.75);
    CHECK(d.samples[1].label == 2);
    CHECK(!d.samples[1].text.has_value());
    CHECK((*d.samples[1].image)(1) == 0.125);
    CHECK(!d.samples[2].image.has_value());
    CHECK((*d.samples[2].text)(0) == -4.0);
    // Our encoder reproduces the independent bytes exactly.
    CHECK(encode_femb(d) == read_file(path));
}

}  // TEST_SUITE
