/**
 * Copyright (c) edgesplit contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Little-endian byte packing shared by the payload and checkpoint formats.

#ifndef EDGESPLIT_BYTES_HPP_
#define EDGESPLIT_BYTES_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "edgesplit/error.hpp"

namespace edgesplit::bytes {

template <typename UInt>
void put_le(std::vector<std::uint8_t>& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFFu));
    v = static_cast<UInt>(v >> 8);
  }
}

template <typename UInt>
UInt get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + sizeof(UInt) > in.size()) throw ConfigurationError("payload truncated");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) {
    v = static_cast<UInt>(v | (static_cast<UInt>(in[pos + i]) << (8 * i)));
  }
  pos += sizeof(UInt);
  return v;
}

}  // namespace edgesplit::bytes

#endif  // EDGESPLIT_BYTES_HPP_
