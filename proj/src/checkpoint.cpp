#include "citeflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace citeflow {

namespace {

constexpr char kMagic[8] = {'C', 'I', 'T', 'E', 'F', 'L', 'O', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& buf, std::size_t& pos) {
  if (pos + 4 > buf.size()) throw Error("checkpoint: truncated header");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

std::uint64_t get_u64(const std::string& buf, std::size_t& pos) {
  if (pos + 8 > buf.size()) throw Error("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string header;
  header.append(kMagic, sizeof(kMagic));
  put_u64(header, tensors.size());

  std::size_t table_bytes = 0;
  for (const NamedTensor& t : tensors) table_bytes += 4 + t.name.size() + 4 + 4 + 8;

  std::uint64_t offset = sizeof(kMagic) + 8 + table_bytes;
  for (const NamedTensor& t : tensors) {
    put_u32(header, static_cast<std::uint32_t>(t.name.size()));
    header.append(t.name);
    put_u32(header, static_cast<std::uint32_t>(t.value.rows));
    put_u32(header, static_cast<std::uint32_t>(t.value.cols));
    put_u64(header, offset);
    offset += t.value.size() * 8;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("checkpoint: cannot open " + path + " for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::string payload;
  for (const NamedTensor& t : tensors) {
    payload.clear();
    payload.reserve(t.value.size() * 8);
    for (double d : t.value.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &d, 8);
      put_u64(payload, bits);
    }
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!out) throw Error("checkpoint: write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (buf.size() < sizeof(kMagic) + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error("checkpoint: bad magic in " + path);

  std::size_t pos = sizeof(kMagic);
  const std::uint64_t count = get_u64(buf, pos);

  struct Entry {
    std::string name;
    std::uint32_t rows, cols;
    std::uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    const std::uint32_t len = get_u32(buf, pos);
    if (pos + len > buf.size()) throw Error("checkpoint: truncated header");
    e.name.assign(buf, pos, len);
    pos += len;
    e.rows = get_u32(buf, pos);
    e.cols = get_u32(buf, pos);
    e.offset = get_u64(buf, pos);
    entries.push_back(std::move(e));
  }

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (const Entry& e : entries) {
    const std::uint64_t bytes = std::uint64_t(e.rows) * e.cols * 8;
    if (e.offset + bytes > buf.size())
      throw Error("checkpoint: payload for '" + e.name + "' extends past end of file");
    Matrix m(static_cast<int>(e.rows), static_cast<int>(e.cols));
    std::size_t p = e.offset;
    for (double& d : m.data) {
      std::uint64_t bits = get_u64(buf, p);
      std::memcpy(&d, &bits, 8);
    }
    tensors.push_back({e.name, std::move(m)});
  }
  return tensors;
}

const Matrix* find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const NamedTensor& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

}  // namespace citeflow
