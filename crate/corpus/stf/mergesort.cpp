#include <cstdio>

void merge(int* left, int* right, int* ltmp, int* rtmp, int nl, int nr) {
    int i = 0;
    int j = 0;
    int k = 0;
    while (i < nl && j < nr) {
        if (left[i] <= right[j]) {
            ltmp[k] = left[i];
            i++;
        } else {
            ltmp[k] = right[j];
            j++;
        }
        k++;
    }
    while (i < nl) {
        ltmp[k] = left[i];
        i++;
        k++;
    }
    while (j < nr) {
        ltmp[k] = right[j];
        j++;
        k++;
    }
    for (int m = 0; m < nl + nr; m++) {
        left[m] = ltmp[m];
    }
}

void msort(int* a, int* tmp, int n) {
    if (n < 2)
        return;
    int mid = n / 2;
    int* right = a + mid;
    int* rtmp = tmp + mid;
    msort(a, tmp, mid);
    msort(right, rtmp, n - mid);
    merge(a, right, tmp, rtmp, mid, n - mid);
}

int main() {
    int v[10] = {9, 3, 7, 1, 8, 2, 6, 0, 5, 4};
    int tmp[10];
    msort(v, tmp, 10);
    for (int i = 0; i < 10; i++) {
        printf("%d", v[i]);
    }
    printf("\n");
    return 0;
}
