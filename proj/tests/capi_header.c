/* compiled as C99: proves the public header needs no C++ compiler */
#include "rosmm/rosmm.h"

const char* rosmm_header_compiles_as_c(void) { return rosmm_version(); }
