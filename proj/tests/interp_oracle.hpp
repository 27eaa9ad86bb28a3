#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

// Reader for interp_oracle.bin, written by tools/gen_interp_oracle.py.
// Each record: u32 in_h, in_w, out_h, out_w, flags (bit 0 antialias, bit 1
// nearest), then f32 input [in_h*in_w] and f32 expected [out_h*out_w].
namespace interp_oracle {

struct Record {
  std::uint32_t in_h = 0, in_w = 0, out_h = 0, out_w = 0, flags = 0;
  std::vector<float> input, expected;
  bool antialias() const { return (flags & 1u) != 0; }
  bool nearest() const { return (flags & 2u) != 0; }
};

inline std::vector<Record> load(const std::string& path = std::string(ANCHORSEG_TEST_DATA) + "/interp_oracle.bin") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Record> out;
  for (;;) {
    std::uint32_t header[5];
    if (!in.read(reinterpret_cast<char*>(header), sizeof(header))) break;
    Record r{header[0], header[1], header[2], header[3], header[4], {}, {}};
    r.input.resize(std::size_t(r.in_h) * r.in_w);
    r.expected.resize(std::size_t(r.out_h) * r.out_w);
    in.read(reinterpret_cast<char*>(r.input.data()), std::streamsize(r.input.size() * sizeof(float)));
    in.read(reinterpret_cast<char*>(r.expected.data()), std::streamsize(r.expected.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated record in " + path);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace interp_oracle
