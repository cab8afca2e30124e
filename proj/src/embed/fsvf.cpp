#include "fsv/embed/fsvf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <random>

namespace fsv::embed {

static_assert(std::endian::native == std::endian::little, "FSVF I/O assumes a little-endian host");

namespace {

template <class U>
void put(std::ostream& os, U value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class U>
U get(std::istream& is, const std::filesystem::path& path) {
    U value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof value))
        throw DataError("truncated FSVF header in " + path.string());
    return value;
}

}  // namespace

void write_fsvf(const std::filesystem::path& path, const dc::Tensor& tensor) {
    if (tensor.ndim() != 2 && tensor.ndim() != 4)
        throw ShapeError("FSVF stores rank 2 or 4 tensors, got " + dc::to_string(tensor.shape()));
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp" + std::to_string(std::random_device{}());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        os.write("FSVF", 4);
        put<std::uint32_t>(os, kFsvfVersion);
        put<std::uint8_t>(os, static_cast<std::uint8_t>(tensor.ndim()));
        for (auto d : tensor.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(tensor.data().data()),
                 static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

dc::Tensor read_fsvf(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "FSVF", 4) != 0) throw DataError(path.string() + " is not an FSVF file");
    const auto version = get<std::uint32_t>(is, path);
    if (version != kFsvfVersion) throw DataError(path.string() + ": unsupported FSVF version " + std::to_string(version));
    const auto ndim = get<std::uint8_t>(is, path);
    if (ndim != 2 && ndim != 4) throw DataError(path.string() + ": FSVF rank must be 2 or 4, got " + std::to_string(ndim));
    dc::Shape shape(ndim);
    for (auto& d : shape) {
        d = get<std::uint32_t>(is, path);
        if (d == 0) throw DataError(path.string() + ": zero dimension in FSVF header");
    }
    std::vector<float> data(dc::numel(shape));
    const auto bytes = static_cast<std::streamsize>(data.size() * sizeof(float));
    if (!is.read(reinterpret_cast<char*>(data.data()), bytes)) throw DataError(path.string() + ": truncated FSVF payload");
    if (is.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes after FSVF payload");
    return dc::Tensor(std::move(shape), std::move(data));
}

StreamFeatures load_precomputed(const std::filesystem::path& path, Stream stream) {
    auto t = read_fsvf(path);
    StreamFeatures f{t.ndim() == 2 ? Form::flat : Form::spatial, stream, t};
    f.validate();
    return f;
}

}  // namespace fsv::embed
