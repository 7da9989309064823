#include <cstdio>

void step(int& acc, int k) {
    acc = acc * 3 + k;
}

void touch(int* buf, int i) {
    buf[i] = buf[i] + i;
}

int main() {
    int acc = 1;
    int i = 0;
    while (i < 5) {
        step(acc, i);
        i = i + 1;
        if (i == 3) {
            continue;
        }
    }
    int buf[6] = {1, 2, 3, 4, 5, 6};
    for (int j = 0; j < 6; j++) {
        if (j == 4) {
            break;
        }
        touch(buf, j);
    }
    printf("%d %d %d\n", acc, buf[3], buf[5]);
    return 0;
}
