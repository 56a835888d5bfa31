#pragma once

#include <iosfwd>

namespace rai::cli {

// Exit status: 0 success, 1 usage or parameter error, 2 data error,
// 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rai::cli
