#include <stdlib.h>
#include "helper.h"

int helper(int x) {
  return abs(x) + 1;
}
