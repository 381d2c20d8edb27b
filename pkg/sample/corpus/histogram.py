from collections import Counter
words = input().split()
for word, count in sorted(Counter(words).items(), key=lambda kv: (-kv[1], kv[0])):
    print(word, count)
