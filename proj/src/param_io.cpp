#include "frangi/param_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <string>

#include "frangi/error.hpp"

namespace frangi {

namespace {

constexpr std::array<char, 8> kMagic = {'F', 'R', 'N', 'G', 'N', 'E', 'T', '1'};
constexpr std::uint32_t kMaxKernelSide = 4097;

template <typename T>
void put_le(std::ostream& out, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in)
{
    std::array<unsigned char, sizeof(T)> bytes;
    in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(T)))
        throw FormatError("parameter file truncated");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

void put_kernel(std::ostream& out, const Image2D& k)
{
    for (double v : k.data())
        put_le(out, v);
}

Image2D get_kernel(std::istream& in, int side)
{
    Image2D k(side, side);
    for (double& v : k.data())
        v = get_le<double>(in);
    return k;
}

} // namespace

void write_params(std::ostream& out, const FrangiNetParams& params)
{
    params.validate();
    out.write(kMagic.data(), kMagic.size());
    put_le(out, params.threshold);
    put_le(out, params.neg_scale);
    put_le(out, params.pos_scale);
    put_le(out, static_cast<std::uint8_t>(params.polarity));
    for (const ScaleParams& sp : params.scales) {
        put_le(out, static_cast<std::uint32_t>(sp.kernels.size()));
        put_kernel(out, sp.kernels.kxx);
        put_kernel(out, sp.kernels.kxy);
        put_kernel(out, sp.kernels.kyy);
        put_le(out, sp.beta);
        put_le(out, sp.c);
    }
    if (!out)
        throw IoError("failed writing parameter stream");
}

FrangiNetParams read_params(std::istream& in)
{
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (in.gcount() != 8 || magic != kMagic)
        throw FormatError("not a FRNGNET1 parameter file");

    FrangiNetParams p;
    p.threshold = get_le<double>(in);
    p.neg_scale = get_le<double>(in);
    p.pos_scale = get_le<double>(in);
    const auto pol = get_le<std::uint8_t>(in);
    if (pol > 1)
        throw FormatError("invalid polarity flag " + std::to_string(pol));
    p.polarity = static_cast<Polarity>(pol);
    for (ScaleParams& sp : p.scales) {
        const auto side = get_le<std::uint32_t>(in);
        if (side < 3 || side % 2 == 0 || side > kMaxKernelSide)
            throw FormatError("invalid kernel side " + std::to_string(side));
        const int n = static_cast<int>(side);
        sp.kernels.kxx = get_kernel(in, n);
        sp.kernels.kxy = get_kernel(in, n);
        sp.kernels.kyy = get_kernel(in, n);
        sp.kernels.sigma = kDefaultSigma;
        sp.beta = get_le<double>(in);
        sp.c = get_le<double>(in);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw FormatError("trailing bytes after parameter data");
    try {
        p.validate();
    } catch (const ParameterError& e) {
        throw FormatError(std::string("parameter file holds invalid values: ") + e.what());
    }
    return p;
}

void save_params(const std::filesystem::path& path, const FrangiNetParams& params)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    write_params(out, params);
}

FrangiNetParams load_params(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    return read_params(in);
}

void save_loss_history(const std::filesystem::path& path, std::span<const double> losses)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << "step,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < losses.size(); ++i)
        out << i << ',' << losses[i] << '\n';
    if (!out)
        throw IoError("failed writing " + path.string());
}

} // namespace frangi
