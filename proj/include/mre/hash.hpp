#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mre {

std::string sha1_hex(std::string_view bytes);
/// SHA-1 over "blob <size>\0<bytes>", the object id git assigns to a file.
std::string git_blob_id(std::string_view bytes);

}  // namespace mre
