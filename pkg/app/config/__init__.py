# Config package initialization 