// Copyright 2026 The vpleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef VPLEAK_IO_H_
#define VPLEAK_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vpleak {

// Little-endian byte buffer builder.
class ByteWriter {
 public:
  void U32(uint32_t v);
  void U64(uint64_t v);
  void F32(float v);
  void Bytes(std::string_view s);

  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

  uint32_t U32();
  uint64_t U64();
  float F32();
  std::string Bytes(size_t n);
  size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void Need(size_t n) const;

  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

std::string Sha256Hex(std::span<const uint8_t> bytes);

std::vector<uint8_t> ReadBinaryFile(const std::filesystem::path& path);
void WriteBinaryFile(const std::filesystem::path& path,
                     std::span<const uint8_t> bytes);
std::string ReadTextFile(const std::filesystem::path& path);
void WriteTextFile(const std::filesystem::path& path, std::string_view text);

// Fixed 4-decimal rendering used in every machine-readable report.
std::string FormatDecimal(double v, int places = 4);

}  // namespace vpleak

#endif  // VPLEAK_IO_H_
