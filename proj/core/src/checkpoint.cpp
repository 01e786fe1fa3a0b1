#include "sepseg/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace sepseg {

namespace {

constexpr char kMagic[4] = {'S', 'E', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
        table[i] = c;
    }
    return table;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t len) {
    static const auto table = make_crc_table();
    std::uint32_t c = 0xFFFFFFFFu;
    for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

template <class T>
void save_checkpoint(const Model<T>& m, const std::string& path) {
    std::string records;
    for (std::size_t i = 0; i < m.names.size(); ++i) {
        const std::string& name = m.names[i];
        const Tensor<T>& p = m.params[i];
        put_u32(records, static_cast<std::uint32_t>(name.size()));
        records += name;
        put_u32(records, static_cast<std::uint32_t>(p.rank()));
        for (auto s : p.shape) put_u64(records, static_cast<std::uint64_t>(s));
        for (std::int64_t j = 0; j < p.numel(); ++j)
            put_u32(records, std::bit_cast<std::uint32_t>(static_cast<float>(p[j])));
    }

    std::string bytes;
    bytes.append(kMagic, 4);
    put_u32(bytes, kVersion);
    bytes += records;
    put_u32(bytes, crc32_ieee(reinterpret_cast<const unsigned char*>(records.data()), records.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("checkpoint write failed: " + path);

    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side) throw DataError("cannot open checkpoint sidecar for writing: " + path + ".json");
    side << network_spec_to_json(m.spec);
}

Model<float> load_checkpoint(const std::string& path) {
    std::ifstream side(path + ".json");
    if (!side) throw DataError("missing checkpoint sidecar: " + path + ".json");
    std::string spec_text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
    const NetworkSpec spec = network_spec_from_json(spec_text);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw DataError("checkpoint truncated: " + path);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw DataError("checkpoint has wrong magic (expected SEPN): " + path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const std::uint32_t version = get_u32(p + 4);
    if (version != kVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    const std::size_t records_len = bytes.size() - 12;
    const std::uint32_t stored_crc = get_u32(p + bytes.size() - 4);
    const std::uint32_t actual_crc = crc32_ieee(p + 8, records_len);
    if (stored_crc != actual_crc) throw DataError("checkpoint CRC mismatch: " + path);

    Model<float> m = spec.block_kind == BlockKind::Separable ? build_sepnet<float>(spec)
                                                             : build_unet_baseline<float>(spec);

    std::size_t off = 8;
    const std::size_t end = 8 + records_len;
    std::size_t loaded = 0;
    while (off < end) {
        if (off + 4 > end) throw DataError("checkpoint record truncated: " + path);
        const std::uint32_t name_len = get_u32(p + off);
        off += 4;
        if (off + name_len + 4 > end) throw DataError("checkpoint record truncated: " + path);
        const std::string name(bytes.data() + off, name_len);
        off += name_len;
        const std::uint32_t rank = get_u32(p + off);
        off += 4;
        if (rank < 1 || rank > 5 || off + 8 * rank > end)
            throw DataError("checkpoint record has invalid rank: " + path);
        std::vector<std::int64_t> shape(rank);
        std::int64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            shape[r] = static_cast<std::int64_t>(get_u64(p + off));
            off += 8;
            numel *= shape[r];
        }
        if (off + 4 * static_cast<std::size_t>(numel) > end)
            throw DataError("checkpoint payload truncated: " + path);
        Tensor<float>& dst = m.param(name);
        if (dst.shape != shape)
            throw DataError("checkpoint tensor \"" + name + "\" has unexpected shape: " + path);
        for (std::int64_t j = 0; j < numel; ++j) {
            dst[j] = std::bit_cast<float>(get_u32(p + off));
            off += 4;
        }
        ++loaded;
    }
    if (loaded != m.names.size())
        throw DataError("checkpoint is missing parameters (" + std::to_string(loaded) + " of " +
                        std::to_string(m.names.size()) + "): " + path);
    return m;
}

template void save_checkpoint<float>(const Model<float>&, const std::string&);
template void save_checkpoint<double>(const Model<double>&, const std::string&);

}  // namespace sepseg
