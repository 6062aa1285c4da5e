#ifndef HELPER_H
#define HELPER_H
int helper(int x);
#endif
