#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "cssl/error.hpp"
#include "cssl/synthdata.hpp"

namespace cssl {

namespace {

struct Header {
  std::size_t width;
  std::size_t height;
  std::size_t payload_offset;
};

bool is_space(std::uint8_t c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Parses "Pn <ws> W <ws> H <ws> 255 <single ws>" and returns the payload offset.
Header parse_header(std::span<const std::uint8_t> bytes, char kind, const char* what) {
  std::size_t pos = 0;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
    throw FormatError(std::string(what) + ": expected magic P" + kind + " at byte 0");
  }
  pos = 2;
  auto number = [&](const char* field) -> std::size_t {
    if (pos >= bytes.size() || !is_space(bytes[pos])) {
      throw FormatError(std::string(what) + ": expected whitespace before " + field +
                        " at byte " + std::to_string(pos));
    }
    while (pos < bytes.size() && is_space(bytes[pos])) ++pos;
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 24)) {
        throw FormatError(std::string(what) + ": " + field + " too large at byte " +
                          std::to_string(start));
      }
      ++pos;
    }
    if (pos == start) {
      throw FormatError(std::string(what) + ": expected " + field + " at byte " +
                        std::to_string(start));
    }
    return v;
  };
  Header h{};
  h.width = number("width");
  h.height = number("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = number("maxval");
  if (maxval != 255) {
    throw FormatError(std::string(what) + ": maxval must be 255, got " + std::to_string(maxval) +
                      " near byte " + std::to_string(maxval_at));
  }
  if (pos >= bytes.size() || !is_space(bytes[pos])) {
    throw FormatError(std::string(what) + ": expected single whitespace after maxval at byte " +
                      std::to_string(pos));
  }
  h.payload_offset = pos + 1;
  if (h.width == 0 || h.height == 0) {
    throw FormatError(std::string(what) + ": zero extent in header");
  }
  return h;
}

std::vector<std::uint8_t> header_bytes(char kind, std::size_t w, std::size_t h) {
  const std::string s = std::string("P") + kind + "\n" + std::to_string(w) + " " +
                        std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

void check_payload(std::span<const std::uint8_t> bytes, const Header& h, std::size_t channels,
                   const char* what) {
  const std::size_t need = h.payload_offset + h.width * h.height * channels;
  if (bytes.size() < need) {
    throw FormatError(std::string(what) + ": payload truncated at byte " +
                      std::to_string(bytes.size()) + ", expected " + std::to_string(need) + " bytes");
  }
  if (bytes.size() > need) {
    throw FormatError(std::string(what) + ": trailing data after byte " + std::to_string(need));
  }
}

}  // namespace

std::uint8_t quantize(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Image quantize(const Image& image) {
  Image out = image;
  for (float& v : out.pixels()) v = static_cast<float>(quantize(v)) / 255.0f;
  return out;
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  auto out = header_bytes('6', image.width(), image.height());
  out.reserve(out.size() + image.pixels().size());
  for (float v : image.pixels()) out.push_back(quantize(v));
  return out;
}

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  const Header h = parse_header(bytes, '6', "ppm");
  check_payload(bytes, h, 3, "ppm");
  Image img(h.height, h.width);
  auto& px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<float>(bytes[h.payload_offset + i]) / 255.0f;
  }
  return img;
}

std::vector<std::uint8_t> encode_pgm(const LabelMask& mask) {
  auto out = header_bytes('5', mask.width(), mask.height());
  out.insert(out.end(), mask.labels().begin(), mask.labels().end());
  return out;
}

LabelMask decode_pgm(std::span<const std::uint8_t> bytes) {
  const Header h = parse_header(bytes, '5', "pgm");
  check_payload(bytes, h, 1, "pgm");
  LabelMask mask(h.height, h.width);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset), bytes.end(),
            mask.labels().begin());
  return mask;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open file for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing file: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_ppm(image));
}

Image read_image(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  write_file(path, encode_pgm(mask));
}

LabelMask read_mask(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cssl
