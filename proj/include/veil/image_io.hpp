#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "veil/common.hpp"
#include "veil/tensor.hpp"

namespace veil {

/// 8-bit RGB image, row-major, top-left origin.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // width * height * 3
};

/// Quantizes a CHW float image in [0,1] to 8-bit RGB (round to nearest).
inline ImageU8 quantize_image(const Tensor<float>& chw) {
  require(chw.rank() == 3 && chw.dim(0) == 3,
          "quantize_image: expected 3xHxW, got ", chw.shape_str());
  ImageU8 img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      float v = chw[static_cast<std::size_t>(c) * plane + i];
      if (v < 0.0f) v = 0.0f;
      if (v > 1.0f) v = 1.0f;
      img.rgb[i * 3 + static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(v * 255.0f + 0.5f);
    }
  }
  return img;
}

inline Tensor<float> dequantize_image(const ImageU8& img) {
  Tensor<float> chw({3, img.height, img.width});
  const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      chw[static_cast<std::size_t>(c) * plane + i] =
          static_cast<float>(img.rgb[i * 3 + static_cast<std::size_t>(c)]) /
          255.0f;
  return chw;
}

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(concat("cannot open file: ", path));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(concat("cannot open file for writing: ", path));
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(concat("write failed: ", path));
}

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t n,
                           std::uint32_t crc = 0xFFFFFFFFu) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  for (std::size_t i = 0; i < n; ++i)
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t n) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

// --- RFC 1951 inflate -------------------------------------------------------

struct BitReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
  std::uint32_t bitbuf = 0;
  int bitcnt = 0;

  // LSB-first bit extraction.
  std::uint32_t bits(int need) {
    while (bitcnt < need) {
      if (pos >= size) throw IoError("inflate: unexpected end of stream");
      bitbuf |= static_cast<std::uint32_t>(data[pos++]) << bitcnt;
      bitcnt += 8;
    }
    const std::uint32_t out = bitbuf & ((1u << need) - 1u);
    bitbuf >>= need;
    bitcnt -= need;
    return out;
  }

  void align_to_byte() {
    bitbuf = 0;
    bitcnt = 0;
  }
};

// Canonical Huffman decoder: symbol counts per code length plus the symbols
// sorted by (length, symbol).
struct Huffman {
  std::array<int, 16> count{};
  std::vector<int> symbol;
};

inline Huffman build_huffman(const std::vector<int>& lengths) {
  Huffman h;
  for (int len : lengths) {
    require<IoError>(len >= 0 && len < 16, "inflate: invalid code length");
    ++h.count[static_cast<std::size_t>(len)];
  }
  h.count[0] = 0;
  // Over-subscribed codes are invalid streams.
  int left = 1;
  for (int len = 1; len < 16; ++len) {
    left <<= 1;
    left -= h.count[static_cast<std::size_t>(len)];
    require<IoError>(left >= 0, "inflate: over-subscribed Huffman code");
  }
  std::array<int, 16> offsets{};
  for (int len = 1; len < 15; ++len)
    offsets[static_cast<std::size_t>(len + 1)] =
        offsets[static_cast<std::size_t>(len)] +
        h.count[static_cast<std::size_t>(len)];
  h.symbol.assign(lengths.size(), 0);
  for (std::size_t s = 0; s < lengths.size(); ++s)
    if (lengths[s] != 0)
      h.symbol[static_cast<std::size_t>(
          offsets[static_cast<std::size_t>(lengths[s])]++)] =
          static_cast<int>(s);
  return h;
}

inline int decode_symbol(BitReader& br, const Huffman& h) {
  int code = 0, first = 0, index = 0;
  for (int len = 1; len < 16; ++len) {
    code |= static_cast<int>(br.bits(1));
    const int count = h.count[static_cast<std::size_t>(len)];
    if (code - first < count)
      return h.symbol[static_cast<std::size_t>(index + (code - first))];
    index += count;
    first = (first + count) << 1;
    code <<= 1;
  }
  throw IoError("inflate: invalid Huffman code");
}

inline void inflate_block_codes(BitReader& br, const Huffman& lit,
                                const Huffman& dist,
                                std::vector<std::uint8_t>& out) {
  static const int len_base[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11, 13,
                                   15, 17, 19, 23, 27, 31, 35, 43, 51, 59,
                                   67, 83, 99, 115, 131, 163, 195, 227, 258};
  static const int len_extra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                    2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
  static const int dist_base[30] = {1,    2,    3,    4,    5,    7,    9,
                                    13,   17,   25,   33,   49,   65,   97,
                                    129,  193,  257,  385,  513,  769,  1025,
                                    1537, 2049, 3073, 4097, 6145, 8193, 12289,
                                    16385, 24577};
  static const int dist_extra[30] = {0, 0, 0,  0,  1,  1,  2,  2,  3,  3,
                                     4, 4, 5,  5,  6,  6,  7,  7,  8,  8,
                                     9, 9, 10, 10, 11, 11, 12, 12, 13, 13};
  for (;;) {
    const int sym = decode_symbol(br, lit);
    if (sym < 256) {
      out.push_back(static_cast<std::uint8_t>(sym));
    } else if (sym == 256) {
      return;
    } else {
      require<IoError>(sym < 286, "inflate: invalid length symbol");
      const int li = sym - 257;
      const std::size_t length =
          static_cast<std::size_t>(len_base[li]) + br.bits(len_extra[li]);
      const int dsym = decode_symbol(br, dist);
      require<IoError>(dsym < 30, "inflate: invalid distance symbol");
      const std::size_t distance =
          static_cast<std::size_t>(dist_base[dsym]) + br.bits(dist_extra[dsym]);
      require<IoError>(distance <= out.size(), "inflate: distance too far back");
      // Overlapping copies are byte-by-byte on purpose.
      std::size_t from = out.size() - distance;
      for (std::size_t i = 0; i < length; ++i) out.push_back(out[from + i]);
    }
  }
}

/// Raw DEFLATE decoder (stored, fixed-Huffman, and dynamic-Huffman blocks).
inline std::vector<std::uint8_t> inflate(const std::uint8_t* data,
                                         std::size_t size,
                                         std::size_t size_hint = 0) {
  BitReader br{data, size};
  std::vector<std::uint8_t> out;
  out.reserve(size_hint);
  for (;;) {
    const bool final_block = br.bits(1) != 0;
    const std::uint32_t type = br.bits(2);
    if (type == 0) {
      br.align_to_byte();
      require<IoError>(br.pos + 4 <= br.size, "inflate: truncated stored block");
      const std::uint32_t len = data[br.pos] | (data[br.pos + 1] << 8);
      const std::uint32_t nlen = data[br.pos + 2] | (data[br.pos + 3] << 8);
      br.pos += 4;
      require<IoError>((len ^ 0xFFFFu) == nlen, "inflate: stored length check failed");
      require<IoError>(br.pos + len <= br.size, "inflate: truncated stored block");
      out.insert(out.end(), data + br.pos, data + br.pos + len);
      br.pos += len;
    } else if (type == 1) {
      static const Huffman fixed_lit = [] {
        std::vector<int> lengths(288);
        for (int i = 0; i < 144; ++i) lengths[i] = 8;
        for (int i = 144; i < 256; ++i) lengths[i] = 9;
        for (int i = 256; i < 280; ++i) lengths[i] = 7;
        for (int i = 280; i < 288; ++i) lengths[i] = 8;
        return build_huffman(lengths);
      }();
      static const Huffman fixed_dist = [] {
        return build_huffman(std::vector<int>(30, 5));
      }();
      inflate_block_codes(br, fixed_lit, fixed_dist, out);
    } else if (type == 2) {
      const int hlit = static_cast<int>(br.bits(5)) + 257;
      const int hdist = static_cast<int>(br.bits(5)) + 1;
      const int hclen = static_cast<int>(br.bits(4)) + 4;
      static const int order[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                    11, 4,  12, 3, 13, 2, 14, 1, 15};
      std::vector<int> cl_lengths(19, 0);
      for (int i = 0; i < hclen; ++i)
        cl_lengths[static_cast<std::size_t>(order[i])] =
            static_cast<int>(br.bits(3));
      const Huffman cl = build_huffman(cl_lengths);
      std::vector<int> lengths;
      lengths.reserve(static_cast<std::size_t>(hlit + hdist));
      while (static_cast<int>(lengths.size()) < hlit + hdist) {
        const int sym = decode_symbol(br, cl);
        if (sym < 16) {
          lengths.push_back(sym);
        } else if (sym == 16) {
          require<IoError>(!lengths.empty(), "inflate: repeat with no prior length");
          const int repeat = 3 + static_cast<int>(br.bits(2));
          lengths.insert(lengths.end(), static_cast<std::size_t>(repeat),
                         lengths.back());
        } else if (sym == 17) {
          const int repeat = 3 + static_cast<int>(br.bits(3));
          lengths.insert(lengths.end(), static_cast<std::size_t>(repeat), 0);
        } else {
          const int repeat = 11 + static_cast<int>(br.bits(7));
          lengths.insert(lengths.end(), static_cast<std::size_t>(repeat), 0);
        }
      }
      require<IoError>(static_cast<int>(lengths.size()) == hlit + hdist,
                       "inflate: code length overflow");
      const Huffman lit = build_huffman(
          std::vector<int>(lengths.begin(), lengths.begin() + hlit));
      const Huffman dist = build_huffman(
          std::vector<int>(lengths.begin() + hlit, lengths.end()));
      inflate_block_codes(br, lit, dist, out);
    } else {
      throw IoError("inflate: invalid block type");
    }
    if (final_block) break;
  }
  return out;
}

/// zlib wrapper around inflate: 2-byte header + adler32 trailer.
inline std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* data,
                                                 std::size_t size,
                                                 std::size_t size_hint = 0) {
  require<IoError>(size >= 6, "zlib: stream too short");
  const std::uint8_t cmf = data[0], flg = data[1];
  require<IoError>((cmf & 0x0F) == 8, "zlib: unsupported compression method");
  require<IoError>((static_cast<unsigned>(cmf) * 256u + flg) % 31u == 0,
                   "zlib: bad header check");
  require<IoError>((flg & 0x20) == 0, "zlib: preset dictionary not supported");
  auto out = inflate(data + 2, size - 6, size_hint);
  const std::uint32_t expected =
      (static_cast<std::uint32_t>(data[size - 4]) << 24) |
      (static_cast<std::uint32_t>(data[size - 3]) << 16) |
      (static_cast<std::uint32_t>(data[size - 2]) << 8) |
      static_cast<std::uint32_t>(data[size - 1]);
  require<IoError>(adler32(out.data(), out.size()) == expected,
                   "zlib: adler32 mismatch");
  return out;
}

/// zlib stream holding the payload in stored (uncompressed) DEFLATE blocks.
inline std::vector<std::uint8_t> zlib_compress_stored(
    const std::uint8_t* data, std::size_t size) {
  std::vector<std::uint8_t> out;
  out.reserve(size + size / 65535 * 5 + 16);
  out.push_back(0x78);
  out.push_back(0x01);
  std::size_t off = 0;
  do {
    const std::size_t chunk = std::min<std::size_t>(size - off, 65535);
    const bool last = off + chunk == size;
    out.push_back(last ? 1 : 0);
    out.push_back(static_cast<std::uint8_t>(chunk & 0xFF));
    out.push_back(static_cast<std::uint8_t>(chunk >> 8));
    out.push_back(static_cast<std::uint8_t>(~chunk & 0xFF));
    out.push_back(static_cast<std::uint8_t>((~chunk >> 8) & 0xFF));
    out.insert(out.end(), data + off, data + off + chunk);
    off += chunk;
  } while (off < size);
  const std::uint32_t a = adler32(data, size);
  out.push_back(static_cast<std::uint8_t>(a >> 24));
  out.push_back(static_cast<std::uint8_t>(a >> 16));
  out.push_back(static_cast<std::uint8_t>(a >> 8));
  out.push_back(static_cast<std::uint8_t>(a));
  return out;
}

inline void push_u32be(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline std::uint32_t read_u32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

inline void append_png_chunk(std::vector<std::uint8_t>& out, const char* type,
                             const std::vector<std::uint8_t>& payload) {
  push_u32be(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const std::uint32_t crc =
      crc32(out.data() + type_pos, 4 + payload.size()) ^ 0xFFFFFFFFu;
  push_u32be(out, crc);
}

inline std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
  if (pb <= pc) return static_cast<std::uint8_t>(b);
  return static_cast<std::uint8_t>(c);
}

}  // namespace detail

// --- PPM (P6, maxval 255) ---------------------------------------------------

inline void write_ppm(const ImageU8& img, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  const std::string header = concat("P6\n", img.width, " ", img.height, "\n255\n");
  bytes.insert(bytes.end(), header.begin(), header.end());
  bytes.insert(bytes.end(), img.rgb.begin(), img.rgb.end());
  detail::write_file_bytes(path, bytes);
}

inline ImageU8 read_ppm(const std::string& path) {
  auto bytes = detail::read_file_bytes(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    // Skip whitespace and '#' comments between header fields.
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]))
      tok.push_back(static_cast<char>(bytes[pos++]));
    return tok;
  };
  require<IoError>(next_token() == "P6", path, ": not a binary PPM (P6)");
  ImageU8 img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    require<IoError>(maxval == 255, path, ": PPM maxval must be 255");
  } catch (const std::logic_error&) {
    throw IoError(concat(path, ": malformed PPM header"));
  }
  require<IoError>(img.width > 0 && img.height > 0, path, ": bad PPM dimensions");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(img.width) * img.height * 3;
  require<IoError>(bytes.size() >= pos + need, path, ": truncated PPM payload");
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                 bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

// --- PNG ---------------------------------------------------------------------

/// 8-bit RGB PNG, filter 0 scanlines, stored DEFLATE blocks.
inline void write_png(const ImageU8& img, const std::string& path) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  std::vector<std::uint8_t> out(sig, sig + 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_u32be(ihdr, static_cast<std::uint32_t>(img.width));
  detail::push_u32be(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  detail::append_png_chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height) * (1 + img.width * 3));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type None
    const std::uint8_t* row =
        img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(img.width) * 3);
  }
  detail::append_png_chunk(out, "IDAT",
                           detail::zlib_compress_stored(raw.data(), raw.size()));
  detail::append_png_chunk(out, "IEND", {});
  detail::write_file_bytes(path, out);
}

/// Decodes non-interlaced 8-bit PNGs with color types 0 (gray), 2 (RGB),
/// 4 (gray+alpha) and 6 (RGBA). Alpha is dropped; palettes are rejected.
inline ImageU8 read_png(const std::string& path) {
  auto bytes = detail::read_file_bytes(path);
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  require<IoError>(bytes.size() > 8 && std::memcmp(bytes.data(), sig, 8) == 0,
                   path, ": not a PNG file");
  std::size_t pos = 8;
  int width = 0, height = 0, color_type = -1, channels = 0;
  std::vector<std::uint8_t> idat;
  bool seen_end = false;
  while (pos + 12 <= bytes.size() && !seen_end) {
    const std::uint32_t len = detail::read_u32be(bytes.data() + pos);
    require<IoError>(pos + 12 + len <= bytes.size(), path, ": truncated PNG chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const std::uint8_t* payload = bytes.data() + pos + 8;
    const std::uint32_t crc = detail::read_u32be(payload + len);
    require<IoError>(
        (detail::crc32(bytes.data() + pos + 4, 4 + len) ^ 0xFFFFFFFFu) == crc,
        path, ": PNG chunk CRC mismatch");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      require<IoError>(len == 13, path, ": bad IHDR");
      width = static_cast<int>(detail::read_u32be(payload));
      height = static_cast<int>(detail::read_u32be(payload + 4));
      const int bit_depth = payload[8];
      color_type = payload[9];
      const int interlace = payload[12];
      require<IoError>(width > 0 && height > 0, path, ": bad PNG dimensions");
      require<IoError>(bit_depth == 8, path, ": only 8-bit PNGs are supported");
      require<IoError>(color_type == 0 || color_type == 2 || color_type == 4 ||
                           color_type == 6,
                       path, ": unsupported PNG color type ", color_type,
                       " (palette PNGs are not supported)");
      require<IoError>(interlace == 0, path,
                       ": interlaced PNGs are not supported");
      channels = color_type == 0 ? 1 : color_type == 2 ? 3 : color_type == 4 ? 2 : 4;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      seen_end = true;
    }
    pos += 12 + len;
  }
  require<IoError>(color_type >= 0, path, ": missing IHDR");
  require<IoError>(seen_end, path, ": missing IEND");
  require<IoError>(!idat.empty(), path, ": missing IDAT");

  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  const std::size_t raw_size = (stride + 1) * static_cast<std::size_t>(height);
  auto raw = detail::zlib_decompress(idat.data(), idat.size(), raw_size);
  require<IoError>(raw.size() == raw_size, path, ": PNG pixel data size mismatch");

  // Undo per-scanline filters in place (recon rows, bpp = channels).
  std::vector<std::uint8_t> recon(stride * static_cast<std::size_t>(height));
  const int bpp = channels;
  for (int y = 0; y < height; ++y) {
    const std::uint8_t ftype = raw[(stride + 1) * static_cast<std::size_t>(y)];
    const std::uint8_t* src = raw.data() + (stride + 1) * static_cast<std::size_t>(y) + 1;
    std::uint8_t* cur = recon.data() + stride * static_cast<std::size_t>(y);
    const std::uint8_t* prior =
        y > 0 ? recon.data() + stride * static_cast<std::size_t>(y - 1) : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = prior ? prior[i] : 0;
      const int c = (prior && i >= static_cast<std::size_t>(bpp)) ? prior[i - bpp] : 0;
      int value = src[i];
      switch (ftype) {
        case 0: break;
        case 1: value += a; break;
        case 2: value += b; break;
        case 3: value += (a + b) / 2; break;
        case 4: value += detail::paeth(a, b, c); break;
        default:
          throw IoError(concat(path, ": unknown PNG filter type ", int(ftype)));
      }
      cur[i] = static_cast<std::uint8_t>(value & 0xFF);
    }
  }

  ImageU8 img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t p = 0; p < static_cast<std::size_t>(width) * height; ++p) {
    const std::uint8_t* px = recon.data() + p * static_cast<std::size_t>(channels);
    if (channels >= 3) {
      img.rgb[p * 3] = px[0];
      img.rgb[p * 3 + 1] = px[1];
      img.rgb[p * 3 + 2] = px[2];
    } else {
      img.rgb[p * 3] = img.rgb[p * 3 + 1] = img.rgb[p * 3 + 2] = px[0];
    }
  }
  return img;
}

/// Reads PNG or PPM, dispatching on the file's magic bytes.
inline ImageU8 read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError(concat("cannot open image: ", path));
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  probe.close();
  if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P')
    return read_png(path);
  throw IoError(concat(path, ": unrecognized image format (need PPM P6 or PNG)"));
}

/// Writes PNG when the path ends in .png, PPM otherwise.
inline void write_image(const ImageU8& img, const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".png") == 0)
    write_png(img, path);
  else
    write_ppm(img, path);
}

}  // namespace veil
