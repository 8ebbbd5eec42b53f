#pragma once

// "FEMB" embedding container.
//
// Binary file (little-endian):
//   "FEMB"            4 bytes magic
//   version           u16 (= 1)
//   modality count    u16 (= 2)
//   section "header"  { per modality: name (u32 len + utf8), d_feature u32; sample count u64 }
//   section "image"   { row count u64; rows x d float32, row-major }
//   section "text"    { same }
// Each section is: name (u32 len + bytes), payload length u64, payload,
// CRC32 (zlib polynomial) of the payload. Rows appear in manifest order and
// only for samples where the modality is present.
//
// Manifest (same stem, ".jsonl"): first line is a header object
//   {"format":"FEMB","version":1,"count":N,"n_classes":K,"d_feature":{"image":D,"text":D}}
// then one object per sample:
//   {"id":...,"label":...,"availability":"complete|image_only|text_only",
//    "restored":{"image":bool,"text":bool}}

#include "featrestore/binio.hpp"
#include "featrestore/data.hpp"

#include <string>

namespace featrestore {

constexpr std::uint16_t kFembVersion = 1;

std::string manifest_path(const std::string& femb_path);

void write_embeddings(const Dataset& data, const std::string& path);
Dataset read_embeddings(const std::string& path);

/// In-memory encoders used by the file functions.
std::vector<std::uint8_t> encode_femb(const Dataset& data);
std::string encode_manifest(const Dataset& data);
Dataset decode_femb(const std::vector<std::uint8_t>& bytes, const std::string& manifest);

}  // namespace featrestore
