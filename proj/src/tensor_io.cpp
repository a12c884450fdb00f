#include "bdt/tensor_io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

namespace bdt {

namespace {

constexpr std::array<std::byte, 4> kMagic = {std::byte{0x42}, std::byte{0x44}, std::byte{0x54},
                                             std::byte{0x31}};
constexpr std::uint8_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 1 + 12;

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(in[offset + i]) << (8 * i);
    return v;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> bytes(raw.size());
    std::memcpy(bytes.data(), raw.data(), raw.size());
    return bytes;
}

}  // namespace

std::vector<std::byte> encode_bdt1(const ImageTensor& image) {
    std::vector<std::byte> out(kMagic.begin(), kMagic.end());
    out.reserve(kHeaderSize + image.data().size() * 4);
    out.push_back(static_cast<std::byte>(kVersion));
    put_u32(out, image.height());
    put_u32(out, image.width());
    put_u32(out, image.channels());
    for (float value : image.data()) {
        put_u32(out, std::bit_cast<std::uint32_t>(value));
    }
    return out;
}

ImageTensor decode_bdt1(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderSize || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        throw DataError("not a BDT1 tensor");
    }
    if (std::to_integer<std::uint8_t>(bytes[4]) != kVersion) {
        throw DataError("unsupported BDT1 version " + std::to_string(std::to_integer<int>(bytes[4])));
    }
    Shape shape{get_u32(bytes, 5), get_u32(bytes, 9), get_u32(bytes, 13)};
    if (shape.height == 0 || shape.width == 0 || shape.channels == 0) {
        throw DataError("BDT1 tensor has a zero dimension");
    }
    if (bytes.size() != kHeaderSize + shape.size() * 4) {
        throw DataError("BDT1 payload length does not match shape " + to_string(shape));
    }
    std::vector<float> data(shape.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderSize + 4 * i));
    }
    return ImageTensor(shape, std::move(data));
}

void write_bdt1(const std::filesystem::path& path, const ImageTensor& image) {
    const auto bytes = encode_bdt1(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw DataError("short write to " + path.string());
    }
}

ImageTensor read_bdt1(const std::filesystem::path& path) {
    ImageTensor image;
    try {
        image = decode_bdt1(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    for (float v : image.data()) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw DataError(path.string() + ": pixel value " + std::to_string(v) + " outside [0, 1]");
        }
    }
    return image;
}

ImageTensor read_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    const std::string name = path.string();
    if (!png_image_begin_read_from_file(&image, name.c_str())) {
        throw DataError(name + ": " + image.message);
    }
    std::uint32_t channels = 0;
    if (image.format & PNG_FORMAT_FLAG_COLORMAP) {
        image.format = PNG_FORMAT_RGB;
        channels = 3;
    } else {
        const bool color = image.format & PNG_FORMAT_FLAG_COLOR;
        const bool alpha = image.format & PNG_FORMAT_FLAG_ALPHA;
        channels = (color ? 3 : 1) + (alpha ? 1 : 0);
        image.format = color ? (alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB) : (alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY);
    }
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&image);
        throw DataError(name + ": " + image.message);
    }
    Shape shape{image.height, image.width, channels};
    std::vector<float> data(shape.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = static_cast<float>(buffer[i]) / 255.0f;
    }
    return ImageTensor(shape, std::move(data));
}

ImageTensor load_image(const std::filesystem::path& path) {
    std::array<unsigned char, 8> head{};
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw DataError("cannot open " + path.string());
        }
        in.read(reinterpret_cast<char*>(head.data()), head.size());
    }
    static constexpr std::array<unsigned char, 8> pngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (head == pngSignature) {
        return read_png(path);
    }
    return read_bdt1(path);
}

}  // namespace bdt
