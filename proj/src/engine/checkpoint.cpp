#include "fsv/engine/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fsv/error.hpp"

namespace fsv::engine {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
   public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <class U>
    void put(U value) {
        os_.write(reinterpret_cast<const char*>(&value), sizeof value);
    }
    void bytes(const std::string& s) {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void block(const std::string& name, const dc::Shape& shape, std::span<const float> data) {
        bytes(name);
        put<std::uint8_t>(static_cast<std::uint8_t>(shape.size()));
        for (auto d : shape) put<std::uint32_t>(static_cast<std::uint32_t>(d));
        os_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    void params(const dc::Parameters& p) {
        put<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
        for (const auto& [name, t] : p) block(name, t.shape(), t.data());
    }
    void moments(const std::map<std::string, std::vector<float>>& m) {
        put<std::uint32_t>(static_cast<std::uint32_t>(m.size()));
        for (const auto& [name, v] : m) block(name, {v.size()}, v);
    }

   private:
    std::ostream& os_;
};

class Reader {
   public:
    Reader(std::istream& is, std::string where) : is_(is), where_(std::move(where)) {}

    template <class U>
    U get() {
        U value{};
        if (!is_.read(reinterpret_cast<char*>(&value), sizeof value)) fail();
        return value;
    }
    std::string bytes() {
        const auto n = get<std::uint32_t>();
        if (n > (1u << 26)) throw DataError(where_ + ": implausible string length");
        std::string s(n, '\0');
        if (n && !is_.read(s.data(), n)) fail();
        return s;
    }
    std::pair<std::string, dc::Tensor> block() {
        auto name = bytes();
        const auto ndim = get<std::uint8_t>();
        if (ndim == 0) throw DataError(where_ + ": block '" + name + "' has rank 0");
        dc::Shape shape(ndim);
        for (auto& d : shape) {
            d = get<std::uint32_t>();
            if (d == 0) throw DataError(where_ + ": block '" + name + "' has a zero dimension");
        }
        std::vector<float> data(dc::numel(shape));
        if (!is_.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float))))
            fail();
        return {std::move(name), dc::Tensor(std::move(shape), std::move(data))};
    }
    dc::Parameters params() {
        dc::Parameters p;
        const auto n = get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n; ++i) {
            auto [name, t] = block();
            p.add(name, std::move(t));
        }
        return p;
    }
    std::map<std::string, std::vector<float>> moments() {
        std::map<std::string, std::vector<float>> m;
        const auto n = get<std::uint32_t>();
        for (std::uint32_t i = 0; i < n; ++i) {
            auto [name, t] = block();
            m[name].assign(t.data().begin(), t.data().end());
        }
        return m;
    }
    bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

   private:
    [[noreturn]] void fail() const { throw DataError(where_ + ": truncated checkpoint"); }

    std::istream& is_;
    std::string where_;
};

}  // namespace

std::string rng_to_string(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 rng_from_string(const std::string& state) {
    std::istringstream is(state);
    std::mt19937_64 rng;
    if (!(is >> rng)) throw DataError("corrupt RNG state in checkpoint");
    return rng;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        Writer w(os);
        os.write("FSCK", 4);
        w.put<std::uint32_t>(kCheckpointVersion);
        w.bytes(ckpt.model_config);
        w.params(ckpt.params);
        w.put<std::uint64_t>(ckpt.adam.step);
        w.moments(ckpt.adam.m);
        w.moments(ckpt.adam.v);
        w.put<std::uint64_t>(ckpt.episode);
        w.bytes(ckpt.rng_state);
        w.put<double>(ckpt.best.val_accuracy);
        w.put<std::uint64_t>(ckpt.best.episode);
        w.put<std::uint32_t>(ckpt.best.stale_checks);
        w.params(ckpt.best.params);
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FSCK", 4) != 0)
        throw DataError(path.string() + " is not a checkpoint file");
    Reader r(is, path.string());
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.model_config = r.bytes();
    c.params = r.params();
    c.adam.step = r.get<std::uint64_t>();
    c.adam.m = r.moments();
    c.adam.v = r.moments();
    c.episode = r.get<std::uint64_t>();
    c.rng_state = r.bytes();
    c.best.val_accuracy = r.get<double>();
    c.best.episode = r.get<std::uint64_t>();
    c.best.stale_checks = r.get<std::uint32_t>();
    c.best.params = r.params();
    if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after checkpoint");
    return c;
}

}  // namespace fsv::engine
