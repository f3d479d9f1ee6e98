#include "srrn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace srrn {

namespace {

constexpr char kMagic[4] = {'S', 'R', 'R', 'N'};

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char bytes[4] = {
        static_cast<unsigned char>(v & 0xFF),
        static_cast<unsigned char>((v >> 8) & 0xFF),
        static_cast<unsigned char>((v >> 16) & 0xFF),
        static_cast<unsigned char>((v >> 24) & 0xFF),
    };
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_floats(std::ostream& out, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    // float data is stored little-endian; this writer assumes an LE host
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * 4));
}

struct Reader {
    std::ifstream in;
    std::string path;

    void read_bytes(void* dst, std::size_t count) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
        if (static_cast<std::size_t>(in.gcount()) != count)
            throw CheckpointError(CheckpointFault::Truncated,
                                  "truncated checkpoint: " + path);
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read_bytes(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) |
               (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::string str() {
        const std::uint32_t len = u32();
        if (len > (1u << 20))
            throw CheckpointError(CheckpointFault::Truncated,
                                  "implausible string length in " + path);
        std::string s(len, '\0');
        read_bytes(s.data(), len);
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, Network& net) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint: " + path);
        out.write(kMagic, 4);
        put_u32(out, kCheckpointVersion);
        put_string(out, net.arch.canonical());
        const auto tensors = net.tensors();
        put_u32(out, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& t : tensors) {
            put_string(out, t.name);
            put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
            for (int d : t.dims) put_u32(out, static_cast<std::uint32_t>(d));
            put_floats(out, *t.values);
        }
        if (!out) {
            std::filesystem::remove(tmp);
            throw DataError("write failed: " + path);
        }
    }
    std::filesystem::rename(tmp, path);
}

Network load_checkpoint(const std::string& path) {
    Reader rd;
    rd.path = path;
    rd.in.open(path, std::ios::binary);
    if (!rd.in) throw DataError("cannot open checkpoint: " + path);

    char magic[4];
    rd.read_bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw CheckpointError(CheckpointFault::BadMagic, "not a checkpoint: " + path);
    const std::uint32_t version = rd.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointFault::BadVersion,
                              "unsupported checkpoint version " +
                                  std::to_string(version) + " in " + path);
    const std::string arch_text = rd.str();
    ArchSpec spec;
    try {
        spec = parse_arch(arch_text);
    } catch (const ConfigError& e) {
        throw CheckpointError(CheckpointFault::Inconsistent,
                              std::string("bad arch string in checkpoint: ") + e.what());
    }
    Network net = build_network(spec, 0);
    auto tensors = net.tensors();

    const std::uint32_t count = rd.u32();
    if (count != tensors.size())
        throw CheckpointError(CheckpointFault::Inconsistent,
                              "inconsistent checkpoint: tensor count " +
                                  std::to_string(count) + ", arch expects " +
                                  std::to_string(tensors.size()));
    for (auto& t : tensors) {
        const std::string name = rd.str();
        if (name != t.name)
            throw CheckpointError(CheckpointFault::Inconsistent,
                                  "inconsistent checkpoint: tensor '" + name +
                                      "' where '" + t.name + "' expected");
        const std::uint32_t rank = rd.u32();
        if (rank != t.dims.size())
            throw CheckpointError(CheckpointFault::Inconsistent,
                                  "inconsistent checkpoint: rank mismatch for " + name);
        std::size_t elems = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = rd.u32();
            if (static_cast<int>(dim) != t.dims[d])
                throw CheckpointError(CheckpointFault::Inconsistent,
                                      "inconsistent checkpoint: dim mismatch for " + name);
            elems *= dim;
        }
        if (elems != t.values->size())
            throw CheckpointError(CheckpointFault::Inconsistent,
                                  "inconsistent checkpoint: size mismatch for " + name);
        rd.read_bytes(t.values->data(), elems * 4);
    }

    // Trailing garbage would break the byte-exact round-trip contract.
    rd.in.peek();
    if (!rd.in.eof())
        throw CheckpointError(CheckpointFault::Inconsistent,
                              "inconsistent checkpoint: trailing data in " + path);

    if (spec.use_bn) {
        // Saved running statistics are taken as valid.
        for (auto& container : net.body)
            for (auto& unit : container.units)
                for (auto& step : unit.branch)
                    if (step.bn) step.bn->params.stats_initialized = true;
    }
    return net;
}

}  // namespace srrn
