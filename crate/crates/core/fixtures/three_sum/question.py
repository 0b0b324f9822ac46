from typing import List
def threeSum(nums: List[int], target: int) -> List[List[int]]:
    """
	Write a function that receives an array of integers and a target integer. Your task is to find all unique triplets in the array which gives the sum of the target integer. The solution set must not contain duplicate triplets. 
    **Example:**
    - Input: `nums = [-1, 0, 1, 2, -1, -4], target = 0`
    - Output: `[[-1, -1, 2], [-1, 0, 1]]`
    """
