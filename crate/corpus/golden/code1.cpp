void a_function(const int a, const int* b, int& c){
    c = a + 1;
}
void a_function_with_call(const int a, const int* b, int& c){
    a_function(a,b,c);
}
int main(){
    int a; int *b; int c;
    a_function_with_call(a,b,c);
    return 0;
}
