#pragma once

#include <cstdint>
#include <string>

#include "sepseg/network.hpp"

namespace sepseg {

// Checkpoint layout: magic "SEPN", format version u32, then one record per
// parameter in model order [name length u32, UTF-8 name, rank u32, shape as
// u64s, payload float32], everything little-endian, and a trailing CRC32 of
// all record bytes. The topology needed to rebuild the Model travels in a
// JSON sidecar at <path>.json (the binary format has no spec record).
// Values are stored as float32, so save/load round-trips float models
// bit-exactly; double models are narrowed on save.

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path);

Model<float> load_checkpoint(const std::string& path);

// IEEE 802.3 CRC-32 (poly 0xEDB88320), used for the checkpoint trailer.
std::uint32_t crc32_ieee(const unsigned char* data, std::size_t len);

}  // namespace sepseg
