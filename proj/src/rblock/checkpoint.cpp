// SPDX-License-Identifier: Apache-2.0
#include "rblock/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "rblock/error.hpp"

namespace rblock {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::vector<std::uint8_t>& in, std::size_t& pos, int bytes,
                     const std::filesystem::path& path) {
  if (pos + static_cast<std::size_t>(bytes) > in.size()) {
    throw FormatError("checkpoint '" + path.string() + "' truncated at byte " + std::to_string(pos));
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
  pos += static_cast<std::size_t>(bytes);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Parameters& params) {
  std::vector<std::uint8_t> out = {'R', 'B', 'L', 'K'};
  put_le(out, kCheckpointVersion, 4);
  for (const auto& buf : params.buffers()) {
    put_le(out, buf.size(), 8);
    for (double v : buf) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidArgument("cannot write checkpoint '" + tmp.string() + "'");
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw InvalidArgument("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

void load_checkpoint(const std::filesystem::path& path, Parameters& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open checkpoint '" + path.string() + "'");
  const std::vector<std::uint8_t> in{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  if (in.size() < 8 || std::memcmp(in.data(), "RBLK", 4) != 0) {
    throw FormatError("'" + path.string() + "' is not an RBLK checkpoint");
  }
  std::size_t pos = 4;
  const auto version = get_le(in, pos, 4, path);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + path.string() + "' has unsupported version " + std::to_string(version));
  }
  auto buffers = params.buffers();
  for (std::size_t b = 0; b < buffers.size(); ++b) {
    const auto len = get_le(in, pos, 8, path);
    if (len != buffers[b].size()) {
      throw FormatError("checkpoint '" + path.string() + "' tensor " + std::to_string(b) + " has " +
                        std::to_string(len) + " values, model expects " + std::to_string(buffers[b].size()));
    }
    for (auto& v : buffers[b]) v = std::bit_cast<double>(get_le(in, pos, 8, path));
  }
  if (pos != in.size()) {
    throw FormatError("checkpoint '" + path.string() + "' has trailing data at byte " + std::to_string(pos));
  }
}

}  // namespace rblock
