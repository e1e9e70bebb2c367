// Copyright 2026  The lidkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef LIDKIT_CLI_H_
#define LIDKIT_CLI_H_

#include <ostream>

namespace lidkit {

// Entry point of the `lidkit` command-line tool. Returns the process exit
// code: 0 ok, 1 usage error, 2 data error, 3 numeric failure.
int RunCli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace lidkit

#endif  // LIDKIT_CLI_H_
